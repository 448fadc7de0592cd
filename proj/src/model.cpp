// SPDX-License-Identifier: Apache-2.0
#include "stutter/model.hpp"

#include <cmath>
#include <random>

#include "stutter/error.hpp"

namespace stutter {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void fill_uniform(Tensor& t, double limit, std::mt19937_64& rng) {
  for (double& v : t.data) {
    const double u01 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = (2.0 * u01 - 1.0) * limit;
  }
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string_view kind_name(const LayerKind& kind) {
  return std::visit(Overloaded{
                        [](const Conv2DSpec&) { return std::string_view("Conv2D"); },
                        [](const ActivationSpec&) { return std::string_view("Activation"); },
                        [](const ReshapeSpec&) { return std::string_view("Reshape"); },
                        [](const GruSpec&) { return std::string_view("GRU"); },
                        [](const DropoutSpec&) { return std::string_view("Dropout"); },
                        [](const DenseSpec&) { return std::string_view("Dense"); },
                    },
                    kind);
}

std::vector<std::string> param_names(const LayerKind& kind) {
  if (std::holds_alternative<Conv2DSpec>(kind) || std::holds_alternative<DenseSpec>(kind)) {
    return {"kernel", "bias"};
  }
  if (std::holds_alternative<GruSpec>(kind)) return {"kernel", "recurrent_kernel", "bias"};
  return {};
}

ModelGraph::ModelGraph(Shape input_shape) : input_shape_(std::move(input_shape)) {
  for (std::size_t d : input_shape_) {
    if (d == 0) throw Error(ErrorCode::InvalidArgument, "input dimensions must be positive");
  }
  shapes_.push_back(input_shape_);
}

ModelGraph& ModelGraph::add(std::string name, LayerKind kind) {
  if (shapes_.empty()) throw Error(ErrorCode::InvalidArgument, "model has no input shape");
  const Shape in = shapes_.back();
  auto mismatch = [&](const std::string& why) {
    return Error(ErrorCode::ShapeMismatch, name + " (" + std::string(kind_name(kind)) + "): " + why +
                                               "; input " + to_string(in));
  };
  auto bad = [&](const std::string& why) { return Error(ErrorCode::InvalidArgument, name + ": " + why); };

  Shape out;
  std::vector<Tensor> params;
  std::visit(Overloaded{
                 [&](const Conv2DSpec& c) {
                   if (c.kernel_h == 0 || c.kernel_w == 0 || c.stride_h == 0 || c.stride_w == 0 || c.filters == 0) {
                     throw bad("kernel, stride and filters must be positive");
                   }
                   if (in.size() != 3) throw mismatch("expects rank-3 input");
                   if (in[0] < c.kernel_h || in[1] < c.kernel_w) throw mismatch("kernel larger than input");
                   out = {(in[0] - c.kernel_h) / c.stride_h + 1, (in[1] - c.kernel_w) / c.stride_w + 1, c.filters};
                   params.emplace_back(Shape{c.kernel_h, c.kernel_w, in[2], c.filters});
                   params.emplace_back(Shape{c.filters});
                 },
                 [&](const ActivationSpec&) { out = in; },
                 [&](const ReshapeSpec& r) {
                   if (r.target.empty() || element_count(r.target) != element_count(in)) {
                     throw mismatch("cannot reshape to " + to_string(r.target));
                   }
                   out = r.target;
                 },
                 [&](const GruSpec& g) {
                   if (g.units == 0) throw bad("units must be positive");
                   if (in.size() != 2) throw mismatch("expects time x features input");
                   out = g.return_sequences ? Shape{in[0], g.units} : Shape{g.units};
                   params.emplace_back(Shape{in[1], 3 * g.units});
                   params.emplace_back(Shape{g.units, 3 * g.units});
                   params.emplace_back(Shape{3 * g.units});
                 },
                 [&](const DropoutSpec& d) {
                   if (!(d.rate >= 0.0 && d.rate < 1.0)) throw bad("dropout rate must be in [0, 1)");
                   out = in;
                 },
                 [&](const DenseSpec& d) {
                   if (d.units == 0) throw bad("units must be positive");
                   if (in.size() != 1) throw mismatch("expects a flat vector");
                   out = {d.units};
                   params.emplace_back(Shape{in[0], d.units});
                   params.emplace_back(Shape{d.units});
                 },
             },
             kind);

  layers_.push_back({std::move(name), std::move(kind)});
  shapes_.push_back(std::move(out));
  params_.push_back(std::move(params));
  return *this;
}

std::size_t ModelGraph::layer_param_count(std::size_t i) const {
  std::size_t n = 0;
  for (const auto& t : params_[i]) n += t.size();
  return n;
}

std::size_t ModelGraph::param_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) n += layer_param_count(i);
  return n;
}

void ModelGraph::initialize(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::mt19937_64 rng(mix_seed(seed, i));
    auto& p = params_[i];
    const Shape& in = shapes_[i];
    std::visit(Overloaded{
                   [&](const Conv2DSpec& c) {
                     const std::size_t area = c.kernel_h * c.kernel_w;
                     fill_uniform(p[0], glorot_limit(area * in[2], area * c.filters), rng);
                     std::fill(p[1].data.begin(), p[1].data.end(), 0.0);
                   },
                   [&](const GruSpec& g) {
                     fill_uniform(p[0], glorot_limit(in[1], 3 * g.units), rng);
                     fill_uniform(p[1], 1.0 / std::sqrt(static_cast<double>(g.units)), rng);
                     std::fill(p[2].data.begin(), p[2].data.end(), 0.0);
                   },
                   [&](const DenseSpec& d) {
                     fill_uniform(p[0], glorot_limit(in[0], d.units), rng);
                     std::fill(p[1].data.begin(), p[1].data.end(), 0.0);
                   },
                   [](const auto&) {},
               },
               layers_[i].kind);
  }
}

Gradients zero_gradients(const ModelGraph& model) {
  Gradients g(model.layer_count());
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    for (const auto& t : model.params(i)) g[i].emplace_back(t.shape);
  }
  return g;
}

Tensor forward(const ModelGraph& model, const Tensor& x, const ForwardOptions& opts, ForwardTape* tape) {
  if (x.shape != model.input_shape()) {
    throw Error(ErrorCode::ShapeMismatch,
                "input " + to_string(x.shape) + " does not match model input " + to_string(model.input_shape()));
  }
  if (tape) {
    tape->values.clear();
    tape->dropout_masks.assign(model.layer_count(), Tensor{});
    tape->gru_caches.assign(model.layer_count(), layers::GruCache{});
  }
  Tensor cur = x;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const auto& p = model.params(i);
    Tensor next = std::visit(
        Overloaded{
            [&](const Conv2DSpec& c) { return layers::conv2d_forward(cur, p[0], p[1], c.stride_h, c.stride_w); },
            [&](const ActivationSpec& a) { return layers::activation_forward(cur, a.fn); },
            [&](const ReshapeSpec& r) { return Tensor(r.target, cur.data); },
            [&](const GruSpec& g) {
              return layers::gru_forward(cur, p[0], p[1], p[2], g.return_sequences,
                                         tape ? &tape->gru_caches[i] : nullptr);
            },
            [&](const DropoutSpec& d) {
              if (!opts.training || d.rate == 0.0) return cur;
              Tensor mask = layers::dropout_mask(cur.shape, d.rate, mix_seed(opts.dropout_seed, i));
              Tensor y = cur;
              for (std::size_t k = 0; k < y.size(); ++k) y[k] *= mask[k];
              if (tape) tape->dropout_masks[i] = std::move(mask);
              return y;
            },
            [&](const DenseSpec& d) { return layers::dense_forward(cur, p[0], p[1], d.fn); },
        },
        model.layer(i).kind);
    if (tape) tape->values.push_back(std::move(cur));
    cur = std::move(next);
  }
  if (tape) tape->values.push_back(cur);
  return cur;
}

Tensor backward(const ModelGraph& model, const ForwardTape& tape, const Tensor& d_output, Gradients& grads) {
  if (tape.values.size() != model.layer_count() + 1) {
    throw Error(ErrorCode::InvalidArgument, "tape does not belong to this model");
  }
  Tensor d = d_output;
  for (std::size_t i = model.layer_count(); i-- > 0;) {
    const auto& p = model.params(i);
    const Tensor& in = tape.values[i];
    const Tensor& out = tape.values[i + 1];
    auto& g = grads[i];
    d = std::visit(
        Overloaded{
            [&](const Conv2DSpec& c) {
              return layers::conv2d_backward(in, p[0], d, c.stride_h, c.stride_w, g[0], g[1]);
            },
            [&](const ActivationSpec& a) { return layers::activation_backward(out, d, a.fn); },
            [&](const ReshapeSpec&) { return Tensor(in.shape, d.data); },
            [&](const GruSpec& gs) {
              return layers::gru_backward(in, p[0], p[1], tape.gru_caches[i], d, gs.return_sequences, g[0], g[1],
                                          g[2]);
            },
            [&](const DropoutSpec&) {
              const Tensor& mask = tape.dropout_masks[i];
              if (mask.size() == 0) return d;
              Tensor dx = d;
              for (std::size_t k = 0; k < dx.size(); ++k) dx[k] *= mask[k];
              return dx;
            },
            [&](const DenseSpec& ds) { return layers::dense_backward(in, p[0], out, d, ds.fn, g[0], g[1]); },
        },
        model.layer(i).kind);
  }
  return d;
}

}  // namespace stutter
