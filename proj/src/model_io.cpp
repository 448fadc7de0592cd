// SPDX-License-Identifier: Apache-2.0
#include "stutter/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "stutter/error.hpp"

namespace stutter {

namespace {

static_assert(std::endian::native == std::endian::little, "model container assumes a little-endian host");

constexpr char kMagic[4] = {'G', 'R', 'C', 'N'};

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::CorruptModel, "truncated model file");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

nlohmann::json layer_to_json(const LayerSpec& layer) {
  nlohmann::json j{{"name", layer.name}, {"kind", kind_name(layer.kind)}};
  if (const auto* c = std::get_if<Conv2DSpec>(&layer.kind)) {
    j["kernel"] = {c->kernel_h, c->kernel_w};
    j["stride"] = {c->stride_h, c->stride_w};
    j["filters"] = c->filters;
  } else if (const auto* a = std::get_if<ActivationSpec>(&layer.kind)) {
    j["activation"] = to_string(a->fn);
  } else if (const auto* r = std::get_if<ReshapeSpec>(&layer.kind)) {
    j["target"] = r->target;
  } else if (const auto* g = std::get_if<GruSpec>(&layer.kind)) {
    j["units"] = g->units;
    j["return_sequences"] = g->return_sequences;
  } else if (const auto* d = std::get_if<DropoutSpec>(&layer.kind)) {
    j["rate"] = d->rate;
  } else if (const auto* e = std::get_if<DenseSpec>(&layer.kind)) {
    j["units"] = e->units;
    j["activation"] = to_string(e->fn);
  }
  return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
  LayerSpec layer;
  layer.name = j.at("name").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "Conv2D") {
    Conv2DSpec c;
    c.kernel_h = j.at("kernel").at(0);
    c.kernel_w = j.at("kernel").at(1);
    c.stride_h = j.at("stride").at(0);
    c.stride_w = j.at("stride").at(1);
    c.filters = j.at("filters");
    layer.kind = c;
  } else if (kind == "Activation") {
    layer.kind = ActivationSpec{activation_from_string(j.at("activation").get<std::string>())};
  } else if (kind == "Reshape") {
    layer.kind = ReshapeSpec{j.at("target").get<Shape>()};
  } else if (kind == "GRU") {
    layer.kind = GruSpec{j.at("units"), j.at("return_sequences")};
  } else if (kind == "Dropout") {
    layer.kind = DropoutSpec{j.at("rate")};
  } else if (kind == "Dense") {
    layer.kind = DenseSpec{j.at("units"), activation_from_string(j.at("activation").get<std::string>())};
  } else {
    throw Error(ErrorCode::CorruptModel, "unknown layer kind '" + kind + "'");
  }
  return layer;
}

std::vector<std::uint8_t> serialize(const ModelGraph& model, const nlohmann::json& extra) {
  nlohmann::json meta;
  meta["input_shape"] = model.input_shape();
  meta["layers"] = nlohmann::json::array();
  std::size_t n_tensors = 0;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    meta["layers"].push_back(layer_to_json(model.layer(i)));
    n_tensors += model.params(i).size();
  }
  meta["tensor_count"] = n_tensors;
  meta["extra"] = extra;
  const std::string meta_text = meta.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kModelFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta_text.size()));
  out.insert(out.end(), meta_text.begin(), meta_text.end());
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const auto names = param_names(model.layer(i).kind);
    for (std::size_t k = 0; k < names.size(); ++k) {
      const std::string name = model.layer(i).name + "/" + names[k];
      const Tensor& t = model.params(i)[k];
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.insert(out.end(), name.begin(), name.end());
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape) put<std::uint64_t>(out, d);
      for (double v : t.data) put<double>(out, v);
    }
  }
  return out;
}

LoadedModel deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw Error(ErrorCode::CorruptModel, "bad magic, not a GRCN model");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::CorruptModel, "unsupported model version " + std::to_string(version) + " (expected " +
                                             std::to_string(kModelFormatVersion) + ")");
  }
  const auto meta_len = r.get<std::uint32_t>();
  auto meta_bytes = r.take(meta_len);

  LoadedModel loaded;
  try {
    const auto meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
    ModelGraph model(meta.at("input_shape").get<Shape>());
    for (const auto& lj : meta.at("layers")) {
      LayerSpec spec = layer_from_json(lj);
      model.add(std::move(spec.name), std::move(spec.kind));
    }
    std::size_t n_tensors = 0;
    for (std::size_t i = 0; i < model.layer_count(); ++i) n_tensors += model.params(i).size();
    if (meta.at("tensor_count").get<std::size_t>() != n_tensors) {
      throw Error(ErrorCode::CorruptModel, "tensor count disagrees with layer list");
    }
    loaded.model = std::move(model);
    loaded.extra = meta.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptModel, std::string("metadata: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptModel) throw;
    throw Error(ErrorCode::CorruptModel, std::string("metadata: ") + e.what());
  }

  ModelGraph& model = loaded.model;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const auto names = param_names(model.layer(i).kind);
    for (std::size_t k = 0; k < names.size(); ++k) {
      Tensor& t = model.params(i)[k];
      const auto name_len = r.get<std::uint32_t>();
      auto name = r.take(name_len);
      const std::string expected = model.layer(i).name + "/" + names[k];
      if (std::string(name.begin(), name.end()) != expected) {
        throw Error(ErrorCode::CorruptModel, "expected tensor '" + expected + "'");
      }
      const auto rank = r.get<std::uint32_t>();
      Shape shape(rank);
      for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
      if (shape != t.shape) {
        throw Error(ErrorCode::CorruptModel, "tensor '" + expected + "' has shape " + to_string(shape) +
                                                 ", layer needs " + to_string(t.shape));
      }
      for (double& v : t.data) v = r.get<double>();
    }
  }
  if (!r.at_end()) throw Error(ErrorCode::CorruptModel, "trailing bytes after last tensor");
  return loaded;
}

void save_model(const std::filesystem::path& path, const ModelGraph& model, const nlohmann::json& extra) {
  const auto bytes = serialize(model, extra);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace stutter
