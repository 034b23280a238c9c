#pragma once

#include <cmath>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "salattack/layers.hpp"
#include "salattack/random.hpp"

namespace salattack {

//! Layer graph of a saliency network. Layers are stored in topological order;
//! every source index precedes its consumer.
struct ModelSpec {
  std::string id;
  Shape input_shape;  // (3, H, W)
  std::vector<Layer> layers;
  std::size_t output_layer = 0;
  // Optional stream partition for multi-stream models: per-layer tag
  // ("fine", "coarse", "shared") and the layer that merges the streams.
  std::vector<std::string> stream;
  std::optional<std::size_t> stream_concat;

  std::size_t size() const { return layers.size(); }

  //! Resolved producer indices of layer i (kImageSource for the image).
  std::vector<int> sources_of(std::size_t i) const {
    const Layer& l = layers.at(i);
    if (!l.sources.empty()) return l.sources;
    return {i == 0 ? kImageSource : static_cast<int>(i) - 1};
  }

  //! Static shape of every layer's output; throws on any inconsistency.
  std::vector<Shape> layer_shapes() const {
    std::vector<Shape> shapes;
    shapes.reserve(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      std::vector<Shape> in;
      for (int s : sources_of(i)) {
        if (s >= static_cast<int>(i) || s < kImageSource)
          throw std::invalid_argument("layer '" + layers[i].name +
                                      "': source must precede the layer (acyclic order)");
        in.push_back(s == kImageSource ? input_shape : shapes[static_cast<std::size_t>(s)]);
      }
      shapes.push_back(output_shape(layers[i], in));
    }
    return shapes;
  }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("model '" + id + "': no layers");
    if (input_shape.size() != 3 || input_shape[0] != 3)
      throw std::invalid_argument("model '" + id + "': input must be 3xHxW");
    if (output_layer >= layers.size())
      throw std::invalid_argument("model '" + id + "': output layer out of range");
    const auto shapes = layer_shapes();
    if (layers[output_layer].kind != LayerKind::Sigmoid || shapes[output_layer][0] != 1)
      throw std::invalid_argument("model '" + id +
                                  "': output layer must be a 1-channel sigmoid map");
    if (!stream.empty() && stream.size() != layers.size())
      throw std::invalid_argument("model '" + id + "': stream tags must cover every layer");
    if (stream_concat && layers.at(*stream_concat).kind != LayerKind::Concat)
      throw std::invalid_argument("model '" + id + "': stream merge layer must be a concat");
  }

  //! Layers whose outputs are required to compute layer i (including i).
  std::vector<bool> ancestors(std::size_t i) const {
    std::vector<bool> need(layers.size(), false);
    need.at(i) = true;
    for (std::size_t j = i + 1; j-- > 0;) {
      if (!need[j]) continue;
      for (int s : sources_of(j))
        if (s != kImageSource) need[static_cast<std::size_t>(s)] = true;
    }
    return need;
  }

  //! Post-activation output of every conv layer, in depth order. These are the
  //! natural attack points; the final entry is the output map.
  std::vector<std::size_t> attack_points() const {
    std::vector<std::size_t> points;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].kind != LayerKind::Relu && layers[i].kind != LayerKind::Sigmoid) continue;
      const auto src = sources_of(i).front();
      if (src != kImageSource && layers[static_cast<std::size_t>(src)].kind == LayerKind::Conv2d)
        points.push_back(i);
    }
    return points;
  }

  //! The bottleneck between encoder and decoder: the stream-merge layer for
  //! multi-stream models, otherwise the attack point with the smallest
  //! spatial extent (the deepest one on ties).
  std::size_t context_layer() const {
    if (stream_concat) return *stream_concat;
    const auto shapes = layer_shapes();
    const auto points = attack_points();
    std::size_t best = points.front();
    for (auto p : points)
      if (shapes[p][1] * shapes[p][2] <= shapes[best][1] * shapes[best][2]) best = p;
    return best;
  }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].name == name) return i;
    throw std::invalid_argument("model '" + id + "': no layer named '" + name + "'");
  }
};

//! Trained parameters, indexed by layer position (conv layers only).
class ModelWeights {
 public:
  ModelWeights() = default;
  explicit ModelWeights(std::size_t layer_count) : params_(layer_count) {}

  const ConvParams* params(std::size_t layer) const {
    return layer < params_.size() && params_[layer] ? &*params_[layer] : nullptr;
  }
  ConvParams* mutable_params(std::size_t layer) {
    return layer < params_.size() && params_[layer] ? &*params_[layer] : nullptr;
  }
  void set(std::size_t layer, ConvParams p) {
    if (layer >= params_.size()) params_.resize(layer + 1);
    params_[layer] = std::move(p);
  }
  std::size_t layer_count() const { return params_.size(); }

  void validate(const ModelSpec& spec) const {
    for (std::size_t i = 0; i < spec.size(); ++i) {
      if (spec.layers[i].kind == LayerKind::Conv2d) check_params(spec.layers[i], params(i));
      else if (params(i))
        throw std::invalid_argument("weights provided for non-conv layer '" + spec.layers[i].name + "'");
    }
  }

  bool operator==(const ModelWeights&) const = default;

 private:
  std::vector<std::optional<ConvParams>> params_;
};

//! Records which layers' parameters were read. Wraps a ModelWeights for
//! instrumented runs; not safe to share between threads.
class ProbedWeights {
 public:
  explicit ProbedWeights(const ModelWeights& w) : weights_(&w), touched_(w.layer_count(), false) {}

  const ConvParams* params(std::size_t layer) const {
    if (layer < touched_.size()) touched_[layer] = true;
    return weights_->params(layer);
  }
  bool touched(std::size_t layer) const { return layer < touched_.size() && touched_[layer]; }
  //! Highest layer whose parameters were read, or -1 if none.
  long deepest_touched() const {
    for (std::size_t i = touched_.size(); i-- > 0;)
      if (touched_[i]) return static_cast<long>(i);
    return -1;
  }
  void reset() { std::fill(touched_.begin(), touched_.end(), false); }

 private:
  const ModelWeights* weights_;
  mutable std::vector<bool> touched_;
};

template <class W>
concept WeightSource = requires(const W& w, std::size_t i) {
  { w.params(i) } -> std::convertible_to<const ConvParams*>;
};

//! Per-layer outputs of one forward pass. Entries not needed for a partial
//! pass are left empty.
struct ActivationTrace {
  Tensor image;
  std::vector<Tensor> layers;

  std::size_t size() const { return layers.size(); }
  const Tensor& operator[](std::size_t i) const { return layers.at(i); }
};

inline void check_image(const ModelSpec& spec, const Tensor& image, bool check_range = true) {
  if (image.shape() != spec.input_shape)
    throw std::invalid_argument("model '" + spec.id + "': image shape " + shape_str(image.shape()) +
                                " does not match input " + shape_str(spec.input_shape));
  if (!check_range) return;
  for (double v : image.values())
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("model '" + spec.id + "': image values must lie in [0,1]");
}

namespace detail {
inline std::vector<const Tensor*> layer_inputs(const ModelSpec& spec, const ActivationTrace& trace,
                                               std::size_t i) {
  std::vector<const Tensor*> in;
  for (int s : spec.sources_of(i))
    in.push_back(s == kImageSource ? &trace.image : &trace.layers[static_cast<std::size_t>(s)]);
  return in;
}
}  // namespace detail

//! Forward pass computing layers up to and including `upto` (and only their
//! ancestors). Parameters of other layers are never read. Images outside
//! [0,1] are rejected unless check_range is false (unclipped attacks).
template <WeightSource W>
ActivationTrace forward_trace(const ModelSpec& spec, const W& weights, const Tensor& image,
                              std::size_t upto, bool check_range = true) {
  check_image(spec, image, check_range);
  if (upto >= spec.size())
    throw std::out_of_range("forward_trace: layer " + std::to_string(upto) + " out of range");
  ActivationTrace trace{image, std::vector<Tensor>(spec.size())};
  const auto need = spec.ancestors(upto);
  for (std::size_t i = 0; i <= upto; ++i) {
    if (!need[i]) continue;
    const ConvParams* p = spec.layers[i].kind == LayerKind::Conv2d ? weights.params(i) : nullptr;
    trace.layers[i] = forward(spec.layers[i], p, detail::layer_inputs(spec, trace, i));
  }
  return trace;
}

template <WeightSource W>
ActivationTrace forward_trace(const ModelSpec& spec, const W& weights, const Tensor& image) {
  return forward_trace(spec, weights, image, spec.output_layer);
}

template <WeightSource W>
Tensor predict(const ModelSpec& spec, const W& weights, const Tensor& image,
               bool check_range = true) {
  return forward_trace(spec, weights, image, spec.output_layer, check_range)
      .layers[spec.output_layer];
}

struct BackpropResult {
  Tensor grad_image;
  std::vector<std::optional<ConvParams>> grad_params;  // per layer, conv only
};

//! Backpropagates grad_at_layer from layer `from` to the image through the
//! ancestors of `from` only.
template <WeightSource W>
BackpropResult backprop_from(const ModelSpec& spec, const W& weights, const ActivationTrace& trace,
                             std::size_t from, const Tensor& grad_at_layer, bool want_param_grads,
                             bool want_image_grad = true) {
  if (from >= spec.size())
    throw std::out_of_range("attacked layer " + std::to_string(from) + " out of range (model has " +
                            std::to_string(spec.size()) + " layers)");
  if (trace.layers.at(from).shape() != grad_at_layer.shape())
    throw std::invalid_argument("grad at layer " + std::to_string(from) + " has shape " +
                                shape_str(grad_at_layer.shape()) + ", expected " +
                                shape_str(trace.layers[from].shape()));
  BackpropResult result{Tensor(trace.image.shape()), {}};
  if (want_param_grads) result.grad_params.resize(spec.size());
  std::vector<Tensor> grads(from + 1);
  grads[from] = grad_at_layer;
  for (std::size_t i = from + 1; i-- > 0;) {
    if (grads[i].empty()) continue;
    const Layer& layer = spec.layers[i];
    const bool is_conv = layer.kind == LayerKind::Conv2d;
    const ConvParams* p = is_conv ? weights.params(i) : nullptr;
    const auto srcs = spec.sources_of(i);
    const bool image_only = std::all_of(srcs.begin(), srcs.end(), [](int s) { return s == kImageSource; });
    auto g = backward(layer, p, detail::layer_inputs(spec, trace, i), grads[i],
                      want_param_grads && is_conv, want_image_grad || !image_only);
    if (want_param_grads && g.params) result.grad_params[i] = std::move(g.params);
    for (std::size_t k = 0; k < srcs.size(); ++k) {
      if (g.inputs[k].empty()) continue;
      Tensor& dst = srcs[k] == kImageSource ? result.grad_image : grads[static_cast<std::size_t>(srcs[k])];
      if (dst.empty()) dst = std::move(g.inputs[k]);
      else dst += g.inputs[k];
    }
    grads[i] = Tensor();
  }
  return result;
}

//! d(loss)/d(image) where grad_at_layer = d(loss)/d(layer output). Only
//! layers feeding `attacked_layer` are touched.
template <WeightSource W>
Tensor grad_input_from_layer(const ModelSpec& spec, const W& weights, const ActivationTrace& trace,
                             std::size_t attacked_layer, const Tensor& grad_at_layer) {
  return backprop_from(spec, weights, trace, attacked_layer, grad_at_layer, false).grad_image;
}

// ---------------------------------------------------------------------------

struct ReceptiveField {
  long size = 1;
  long jump = 1;
};

//! Receptive field size and jump (input-pixel stride) of layer `layer`.
inline ReceptiveField receptive_field(const ModelSpec& spec, std::size_t layer) {
  if (layer >= spec.size())
    throw std::out_of_range("receptive_field: layer " + std::to_string(layer) + " out of range");
  std::vector<ReceptiveField> rf(layer + 1);
  for (std::size_t i = 0; i <= layer; ++i) {
    ReceptiveField in{1, 1};
    bool first = true;
    for (int s : spec.sources_of(i)) {
      const ReceptiveField src = s == kImageSource ? ReceptiveField{1, 1} : rf[static_cast<std::size_t>(s)];
      if (first || src.size > in.size) in.size = src.size;
      in.jump = first ? src.jump : std::min(in.jump, src.jump);
      first = false;
    }
    const Layer& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::Conv2d:
      case LayerKind::MaxPool:
        rf[i] = {in.size + (l.kernel - 1) * in.jump, in.jump * l.stride};
        break;
      case LayerKind::Upsample:
        if (in.jump % 2 != 0)
          throw std::invalid_argument("receptive_field: layer '" + l.name +
                                      "' upsamples a full-resolution map");
        rf[i] = {in.size, in.jump / 2};
        break;
      default:
        rf[i] = in;
    }
  }
  return rf[layer];
}

// ---------------------------------------------------------------------------
// Reference toy models.

inline ModelSpec minisal_s(std::size_t height = 64, std::size_t width = 48) {
  ModelSpec s;
  s.id = "minisal-s";
  s.input_shape = {3, height, width};
  s.layers = {
      conv_layer("enc1", 3, 16),   relu_layer("enc1_relu"), maxpool_layer("pool1"),
      conv_layer("enc2", 16, 32),  relu_layer("enc2_relu"), maxpool_layer("pool2"),
      conv_layer("ctx", 32, 64),   relu_layer("ctx_relu"),  upsample_layer("up1"),
      conv_layer("dec1", 64, 16),  relu_layer("dec1_relu"), upsample_layer("up2"),
      conv_layer("out", 16, 1),    sigmoid_layer("out_sigmoid"),
  };
  s.output_layer = s.layers.size() - 1;
  s.validate();
  return s;
}

//! Two MiniSal-S encoders (full and half resolution) concatenated along
//! channels before a shared decoder. The coarse stream's context map is
//! upsampled to the fine stream's resolution before the merge.
inline ModelSpec minisal_m(std::size_t height = 64, std::size_t width = 48) {
  ModelSpec s;
  s.id = "minisal-m";
  s.input_shape = {3, height, width};
  auto from = [](Layer l, int src) {
    l.sources = {src};
    return l;
  };
  s.layers = {
      // fine stream: 0..7
      conv_layer("fine_enc1", 3, 16), relu_layer("fine_enc1_relu"), maxpool_layer("fine_pool1"),
      conv_layer("fine_enc2", 16, 32), relu_layer("fine_enc2_relu"), maxpool_layer("fine_pool2"),
      conv_layer("fine_ctx", 32, 64), relu_layer("fine_ctx_relu"),
      // coarse stream: 8..17
      from(maxpool_layer("coarse_down"), kImageSource),
      conv_layer("coarse_enc1", 3, 16), relu_layer("coarse_enc1_relu"), maxpool_layer("coarse_pool1"),
      conv_layer("coarse_enc2", 16, 32), relu_layer("coarse_enc2_relu"), maxpool_layer("coarse_pool2"),
      conv_layer("coarse_ctx", 32, 64), relu_layer("coarse_ctx_relu"), upsample_layer("coarse_up"),
      // shared decoder: 18..
      concat_layer("merge", {7, 17}),
      upsample_layer("up1"), conv_layer("dec1", 128, 16), relu_layer("dec1_relu"),
      upsample_layer("up2"), conv_layer("out", 16, 1), sigmoid_layer("out_sigmoid"),
  };
  s.output_layer = s.layers.size() - 1;
  s.stream.assign(s.layers.size(), "shared");
  for (std::size_t i = 0; i < 8; ++i) s.stream[i] = "fine";
  for (std::size_t i = 8; i < 18; ++i) s.stream[i] = "coarse";
  s.stream_concat = 18;
  s.validate();
  return s;
}

//! Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
inline ModelWeights init_weights(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  ModelWeights w(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const Layer& l = spec.layers[i];
    if (l.kind != LayerKind::Conv2d) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_channels * l.kernel * l.kernel));
    ConvParams p{Tensor({static_cast<std::size_t>(l.out_channels), static_cast<std::size_t>(l.in_channels),
                         static_cast<std::size_t>(l.kernel), static_cast<std::size_t>(l.kernel)}),
                 Tensor({static_cast<std::size_t>(l.out_channels)})};
    for (double& v : p.weight.values()) v = uniform(rng, -bound, bound);
    for (double& v : p.bias.values()) v = uniform(rng, -bound, bound);
    w.set(i, std::move(p));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Model manifest: model.json plus one SFT1 file per conv weight and bias.

inline nlohmann::json spec_to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["id"] = spec.id;
  j["input"] = spec.input_shape;
  j["output_layer"] = spec.output_layer;
  auto& layers = j["layers"] = nlohmann::json::array();
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const Layer& l = spec.layers[i];
    nlohmann::json e{{"name", l.name}, {"kind", to_string(l.kind)}};
    if (l.kind == LayerKind::Conv2d || l.kind == LayerKind::MaxPool) {
      e["kernel"] = l.kernel;
      e["stride"] = l.stride;
      e["padding"] = l.padding;
    }
    if (l.kind == LayerKind::Conv2d) {
      e["in_channels"] = l.in_channels;
      e["out_channels"] = l.out_channels;
    }
    if (!l.sources.empty()) e["sources"] = l.sources;
    if (!spec.stream.empty()) e["stream"] = spec.stream[i];
    layers.push_back(std::move(e));
  }
  if (spec.stream_concat) j["stream_concat"] = *spec.stream_concat;
  return j;
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.id = j.at("id").get<std::string>();
  s.input_shape = j.at("input").get<Shape>();
  s.output_layer = j.at("output_layer").get<std::size_t>();
  bool has_streams = false;
  for (const auto& e : j.at("layers")) {
    Layer l;
    l.name = e.at("name").get<std::string>();
    l.kind = layer_kind_from_string(e.at("kind").get<std::string>());
    l.kernel = e.value("kernel", 1);
    l.stride = e.value("stride", 1);
    l.padding = e.value("padding", 0);
    l.in_channels = e.value("in_channels", 0);
    l.out_channels = e.value("out_channels", 0);
    if (e.contains("sources")) l.sources = e["sources"].get<std::vector<int>>();
    if (e.contains("stream")) has_streams = true;
    s.stream.push_back(e.value("stream", std::string("shared")));
    s.layers.push_back(std::move(l));
  }
  if (!has_streams) s.stream.clear();
  if (j.contains("stream_concat")) s.stream_concat = j["stream_concat"].get<std::size_t>();
  s.validate();
  return s;
}

//! Writes <dir>/model.json and <dir>/<layer>.{weight,bias}.sft1.
inline void save_model(const std::filesystem::path& dir, const ModelSpec& spec,
                       const ModelWeights& weights) {
  std::filesystem::create_directories(dir);
  auto j = spec_to_json(spec);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const ConvParams* p = weights.params(i);
    if (!p) continue;
    const std::string w = spec.layers[i].name + ".weight.sft1";
    const std::string b = spec.layers[i].name + ".bias.sft1";
    save_sft1((dir / w).string(), p->weight);
    save_sft1((dir / b).string(), p->bias);
    j["layers"][i]["weight"] = w;
    j["layers"][i]["bias"] = b;
  }
  std::ofstream os(dir / "model.json");
  if (!os) throw std::runtime_error("cannot write " + (dir / "model.json").string());
  os << j.dump(2) << '\n';
}

struct LoadedModel {
  ModelSpec spec;
  ModelWeights weights;
};

//! Accepts either the manifest path or its directory.
inline LoadedModel load_model(const std::filesystem::path& path) {
  const auto manifest = std::filesystem::is_directory(path) ? path / "model.json" : path;
  std::ifstream is(manifest);
  if (!is) throw std::runtime_error("cannot open model manifest " + manifest.string());
  const auto j = nlohmann::json::parse(is);
  LoadedModel m{spec_from_json(j), ModelWeights(0)};
  m.weights = ModelWeights(m.spec.size());
  const auto dir = manifest.parent_path();
  for (std::size_t i = 0; i < m.spec.size(); ++i) {
    const auto& e = j["layers"][i];
    if (!e.contains("weight")) continue;
    m.weights.set(i, ConvParams{load_sft1((dir / e["weight"].get<std::string>()).string()),
                                load_sft1((dir / e["bias"].get<std::string>()).string())});
  }
  m.weights.validate(m.spec);
  return m;
}

}  // namespace salattack
