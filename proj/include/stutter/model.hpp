// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stutter/layers.hpp"
#include "stutter/tensor.hpp"

namespace stutter {

struct Conv2DSpec {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t filters = 1;
};

struct ActivationSpec {
  ActivationFn fn = ActivationFn::Relu;
};

struct ReshapeSpec {
  Shape target;
};

struct GruSpec {
  std::size_t units = 1;
  bool return_sequences = false;
};

struct DropoutSpec {
  double rate = 0.2;
};

struct DenseSpec {
  std::size_t units = 1;
  ActivationFn fn = ActivationFn::Linear;
};

using LayerKind = std::variant<Conv2DSpec, ActivationSpec, ReshapeSpec, GruSpec, DropoutSpec, DenseSpec>;

struct LayerSpec {
  std::string name;
  LayerKind kind;
};

/// "Conv2D", "Activation", ...
std::string_view kind_name(const LayerKind& kind);

/// Ordered layer stack with statically inferred shapes and owned parameters.
/// Parameters are created zero-filled by `add`; call `initialize` to draw
/// random starting weights.
class ModelGraph {
 public:
  ModelGraph() = default;
  explicit ModelGraph(Shape input_shape);

  /// Appends a layer. Throws ShapeMismatch when it cannot accept the current
  /// output shape, or InvalidArgument for bad hyperparameters.
  ModelGraph& add(std::string name, LayerKind kind);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.back(); }
  std::size_t layer_count() const { return layers_.size(); }
  const LayerSpec& layer(std::size_t i) const { return layers_[i]; }

  /// Input shape followed by every layer's output shape.
  const std::vector<Shape>& shape_trace() const { return shapes_; }

  std::size_t param_count() const;
  std::size_t layer_param_count(std::size_t i) const;

  std::vector<Tensor>& params(std::size_t layer) { return params_[layer]; }
  const std::vector<Tensor>& params(std::size_t layer) const { return params_[layer]; }

  /// Glorot-uniform input kernels, 1/sqrt(u)-uniform recurrent kernels, zero
  /// biases.
  void initialize(std::uint64_t seed);

 private:
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::vector<std::vector<Tensor>> params_;
};

/// Parameter tensor names for a layer kind, in storage order.
std::vector<std::string> param_names(const LayerKind& kind);

using Gradients = std::vector<std::vector<Tensor>>;

Gradients zero_gradients(const ModelGraph& model);

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

/// Values recorded by a training-mode forward pass.
struct ForwardTape {
  std::vector<Tensor> values;  // layer inputs, then the final output
  std::vector<Tensor> dropout_masks;
  std::vector<layers::GruCache> gru_caches;
};

Tensor forward(const ModelGraph& model, const Tensor& x, const ForwardOptions& opts = {},
               ForwardTape* tape = nullptr);

/// Backpropagates `d_output` through a recorded pass, accumulating into
/// `grads`. Returns the gradient with respect to the model input.
Tensor backward(const ModelGraph& model, const ForwardTape& tape, const Tensor& d_output, Gradients& grads);

}  // namespace stutter
