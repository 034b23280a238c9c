#pragma once

#include <Eigen/Core>

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "salattack/tensor.hpp"

namespace salattack {

enum class LayerKind { Conv2d, Relu, Sigmoid, MaxPool, Upsample, Concat };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Upsample: return "upsample";
    case LayerKind::Concat: return "concat";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::Conv2d, LayerKind::Relu, LayerKind::Sigmoid,
                 LayerKind::MaxPool, LayerKind::Upsample, LayerKind::Concat})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown layer kind '" + s + "'");
}

//! Index used in Layer::sources to denote the network input image.
inline constexpr int kImageSource = -1;

struct Layer {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int in_channels = 0;
  int out_channels = 0;
  // Producers of this layer's input(s). Empty means "the previous layer" (or
  // the image for layer 0). Concat lists every source in stacking order.
  std::vector<int> sources;

  void validate() const {
    if (kernel < 1 || stride < 1 || padding < 0)
      throw std::invalid_argument("layer '" + name +
                                  "': kernel >= 1, stride >= 1, padding >= 0 required");
    if (kind == LayerKind::Conv2d && (in_channels < 1 || out_channels < 1))
      throw std::invalid_argument("layer '" + name + "': conv channel counts must be positive");
    if (kind == LayerKind::Concat && sources.size() < 2)
      throw std::invalid_argument("layer '" + name + "': concat needs at least two sources");
    if (kind != LayerKind::Concat && sources.size() > 1)
      throw std::invalid_argument("layer '" + name + "': only concat takes multiple sources");
  }
};

inline Layer conv_layer(std::string name, int in, int out, int kernel = 3,
                        int stride = 1, int padding = 1) {
  return Layer{LayerKind::Conv2d, std::move(name), kernel, stride, padding, in, out, {}};
}
inline Layer relu_layer(std::string name) { return Layer{LayerKind::Relu, std::move(name), 1, 1, 0, 0, 0, {}}; }
inline Layer sigmoid_layer(std::string name) { return Layer{LayerKind::Sigmoid, std::move(name), 1, 1, 0, 0, 0, {}}; }
inline Layer maxpool_layer(std::string name, int kernel = 2, int stride = 2) {
  return Layer{LayerKind::MaxPool, std::move(name), kernel, stride, 0, 0, 0, {}};
}
inline Layer upsample_layer(std::string name) {
  return Layer{LayerKind::Upsample, std::move(name), 1, 1, 0, 0, 0, {}};
}
inline Layer concat_layer(std::string name, std::vector<int> sources) {
  return Layer{LayerKind::Concat, std::move(name), 1, 1, 0, 0, 0, std::move(sources)};
}

//! Trainable parameters of one conv layer: weight (out, in, k, k), bias (out).
struct ConvParams {
  Tensor weight;
  Tensor bias;

  bool operator==(const ConvParams&) const = default;
};

namespace detail {

inline std::size_t pooled_extent(std::size_t in, int pad, int kernel, int stride) {
  const long span = static_cast<long>(in) + 2L * pad - kernel;
  if (span < 0) return 0;
  return static_cast<std::size_t>(span / stride + 1);
}

[[noreturn]] inline void shape_error(const Layer& layer, const std::string& what,
                                     const Shape& expected, const Shape& got) {
  throw std::invalid_argument("layer '" + layer.name + "' (" + to_string(layer.kind) +
                              "): " + what + ": expected " + shape_str(expected) +
                              ", got " + shape_str(got));
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Per-thread scratch for unfolded patches; reused across calls.
inline MapMat scratch_matrix(std::size_t slot, Eigen::Index rows, Eigen::Index cols) {
  thread_local std::vector<double> buffers[2];
  auto& buf = buffers[slot];
  const auto n = static_cast<std::size_t>(rows * cols);
  if (buf.size() < n) buf.resize(n);
  return MapMat(buf.data(), rows, cols);
}

// Unfolds (C, H, W) into (C*k*k, Ho*Wo) with zero padding. The result views
// per-thread scratch and is only valid until the next call.
inline MapMat im2col(const Tensor& in, int k, int stride, int pad, std::size_t ho,
                     std::size_t wo) {
  const std::size_t c = in.channels(), h = in.height(), w = in.width();
  MapMat cols = scratch_matrix(0, static_cast<Eigen::Index>(c * k * k),
                               static_cast<Eigen::Index>(ho * wo));
  cols.setZero();
  for (std::size_t ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.row(static_cast<Eigen::Index>((ci * k + ky) * k + kx)).data();
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + ky;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + kx;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            row[oy * wo + ox] = in.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
          }
        }
      }
  return cols;
}

inline void col2im(const MapMat& cols, Tensor& out, int k, int stride, int pad,
                   std::size_t ho, std::size_t wo) {
  const std::size_t c = out.channels(), h = out.height(), w = out.width();
  for (std::size_t ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols.row(static_cast<Eigen::Index>((ci * k + ky) * k + kx)).data();
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + ky;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + kx;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            out.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) += row[oy * wo + ox];
          }
        }
      }
}

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

//! Predicted output shape; throws with a diagnostic naming the layer on mismatch.
inline Shape output_shape(const Layer& layer, const std::vector<Shape>& inputs) {
  layer.validate();
  const std::size_t arity = layer.kind == LayerKind::Concat ? layer.sources.size() : 1;
  if (inputs.size() != arity)
    throw std::invalid_argument("layer '" + layer.name + "': expected " +
                                std::to_string(arity) + " input(s), got " +
                                std::to_string(inputs.size()));
  for (const auto& s : inputs)
    if (s.size() != 3)
      throw std::invalid_argument("layer '" + layer.name + "': expected a CxHxW input, got " +
                                  shape_str(s));
  const Shape& in = inputs.front();
  switch (layer.kind) {
    case LayerKind::Conv2d: {
      if (in[0] != static_cast<std::size_t>(layer.in_channels))
        detail::shape_error(layer, "input channel mismatch",
                            {static_cast<std::size_t>(layer.in_channels), in[1], in[2]}, in);
      const auto ho = detail::pooled_extent(in[1], layer.padding, layer.kernel, layer.stride);
      const auto wo = detail::pooled_extent(in[2], layer.padding, layer.kernel, layer.stride);
      if (ho == 0 || wo == 0)
        throw std::invalid_argument("layer '" + layer.name + "': input " + shape_str(in) +
                                    " smaller than kernel");
      return {static_cast<std::size_t>(layer.out_channels), ho, wo};
    }
    case LayerKind::Relu:
    case LayerKind::Sigmoid:
      return in;
    case LayerKind::MaxPool: {
      const auto ho = detail::pooled_extent(in[1], layer.padding, layer.kernel, layer.stride);
      const auto wo = detail::pooled_extent(in[2], layer.padding, layer.kernel, layer.stride);
      if (ho == 0 || wo == 0)
        throw std::invalid_argument("layer '" + layer.name + "': input " + shape_str(in) +
                                    " smaller than pooling window");
      return {in[0], ho, wo};
    }
    case LayerKind::Upsample:
      return {in[0], in[1] * 2, in[2] * 2};
    case LayerKind::Concat: {
      std::size_t c = 0;
      for (const auto& s : inputs) {
        if (s[1] != in[1] || s[2] != in[2])
          detail::shape_error(layer, "concat sources must share spatial size",
                              {s[0], in[1], in[2]}, s);
        c += s[0];
      }
      return {c, in[1], in[2]};
    }
  }
  return in;
}

inline void check_params(const Layer& layer, const ConvParams* params) {
  if (layer.kind != LayerKind::Conv2d) return;
  if (!params)
    throw std::invalid_argument("layer '" + layer.name + "': conv layer requires weights");
  const Shape ws{static_cast<std::size_t>(layer.out_channels),
                 static_cast<std::size_t>(layer.in_channels),
                 static_cast<std::size_t>(layer.kernel), static_cast<std::size_t>(layer.kernel)};
  if (params->weight.shape() != ws) detail::shape_error(layer, "weight shape", ws, params->weight.shape());
  const Shape bs{static_cast<std::size_t>(layer.out_channels)};
  if (params->bias.shape() != bs) detail::shape_error(layer, "bias shape", bs, params->bias.shape());
}

inline Tensor forward(const Layer& layer, const ConvParams* params,
                      const std::vector<const Tensor*>& inputs) {
  std::vector<Shape> shapes;
  for (const Tensor* t : inputs) shapes.push_back(t->shape());
  const Shape out_shape = output_shape(layer, shapes);
  check_params(layer, params);
  const Tensor& in = *inputs.front();
  Tensor out(out_shape);

  switch (layer.kind) {
    case LayerKind::Conv2d: {
      const std::size_t ho = out_shape[1], wo = out_shape[2];
      const auto cols = detail::im2col(in, layer.kernel, layer.stride, layer.padding, ho, wo);
      detail::CMapMat w(params->weight.data(), layer.out_channels,
                        static_cast<Eigen::Index>(layer.in_channels) * layer.kernel * layer.kernel);
      detail::MapMat o(out.data(), layer.out_channels, static_cast<Eigen::Index>(ho * wo));
      o.noalias() = w * cols;
      for (int co = 0; co < layer.out_channels; ++co) o.row(co).array() += params->bias[co];
      break;
    }
    case LayerKind::Relu:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0 ? in[i] : 0.0;
      break;
    case LayerKind::Sigmoid:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = detail::sigmoid(in[i]);
      break;
    case LayerKind::MaxPool: {
      for (std::size_t c = 0; c < out_shape[0]; ++c)
        for (std::size_t oy = 0; oy < out_shape[1]; ++oy)
          for (std::size_t ox = 0; ox < out_shape[2]; ++ox) {
            double best = -std::numeric_limits<double>::infinity();
            for (int ky = 0; ky < layer.kernel; ++ky)
              for (int kx = 0; kx < layer.kernel; ++kx) {
                const long iy = static_cast<long>(oy) * layer.stride - layer.padding + ky;
                const long ix = static_cast<long>(ox) * layer.stride - layer.padding + kx;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.height()) ||
                    ix >= static_cast<long>(in.width()))
                  continue;
                best = std::max(best, in.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)));
              }
            out.at(c, oy, ox) = best;
          }
      break;
    }
    case LayerKind::Upsample:
      for (std::size_t c = 0; c < out_shape[0]; ++c)
        for (std::size_t y = 0; y < out_shape[1]; ++y)
          for (std::size_t x = 0; x < out_shape[2]; ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
      break;
    case LayerKind::Concat: {
      std::size_t offset = 0;
      for (const Tensor* t : inputs) {
        std::copy(t->values().begin(), t->values().end(), out.data() + offset);
        offset += t->size();
      }
      break;
    }
  }
  return out;
}

inline Tensor forward(const Layer& layer, const ConvParams* params, const Tensor& input) {
  return forward(layer, params, std::vector<const Tensor*>{&input});
}

struct LayerGradient {
  std::vector<Tensor> inputs;  // one per forward input
  std::optional<ConvParams> params;
};

//! Backpropagates grad_output through one layer. Weight gradients are only
//! produced for conv layers and only when want_param_grad is set. A conv
//! layer skips its input gradient (leaving it empty) if want_input_grad is
//! false.
inline LayerGradient backward(const Layer& layer, const ConvParams* params,
                              const std::vector<const Tensor*>& cached_inputs,
                              const Tensor& grad_output, bool want_param_grad = true,
                              bool want_input_grad = true) {
  std::vector<Shape> shapes;
  for (const Tensor* t : cached_inputs) shapes.push_back(t->shape());
  const Shape out_shape = output_shape(layer, shapes);
  if (grad_output.shape() != out_shape)
    detail::shape_error(layer, "grad-output shape", out_shape, grad_output.shape());
  check_params(layer, params);

  const Tensor& in = *cached_inputs.front();
  LayerGradient g;
  switch (layer.kind) {
    case LayerKind::Conv2d: {
      const std::size_t ho = out_shape[1], wo = out_shape[2];
      const auto kk = static_cast<Eigen::Index>(layer.in_channels) * layer.kernel * layer.kernel;
      detail::CMapMat w(params->weight.data(), layer.out_channels, kk);
      detail::CMapMat go(grad_output.data(), layer.out_channels, static_cast<Eigen::Index>(ho * wo));
      if (want_input_grad) {
        detail::MapMat dcols = detail::scratch_matrix(1, kk, static_cast<Eigen::Index>(ho * wo));
        dcols.noalias() = w.transpose() * go;
        Tensor gin(in.shape());
        detail::col2im(dcols, gin, layer.kernel, layer.stride, layer.padding, ho, wo);
        g.inputs.push_back(std::move(gin));
      } else {
        g.inputs.emplace_back();
      }
      if (want_param_grad) {
        const auto cols = detail::im2col(in, layer.kernel, layer.stride, layer.padding, ho, wo);
        ConvParams gp{Tensor(params->weight.shape()), Tensor(params->bias.shape())};
        detail::MapMat gw(gp.weight.data(), layer.out_channels, kk);
        gw.noalias() = go * cols.transpose();
        for (int co = 0; co < layer.out_channels; ++co) gp.bias[co] = go.row(co).sum();
        g.params = std::move(gp);
      }
      break;
    }
    case LayerKind::Relu: {
      Tensor gin(in.shape());
      for (std::size_t i = 0; i < in.size(); ++i) gin[i] = in[i] > 0 ? grad_output[i] : 0.0;
      g.inputs.push_back(std::move(gin));
      break;
    }
    case LayerKind::Sigmoid: {
      Tensor gin(in.shape());
      for (std::size_t i = 0; i < in.size(); ++i) {
        const double s = detail::sigmoid(in[i]);
        gin[i] = grad_output[i] * s * (1.0 - s);
      }
      g.inputs.push_back(std::move(gin));
      break;
    }
    case LayerKind::MaxPool: {
      Tensor gin(in.shape());
      for (std::size_t c = 0; c < out_shape[0]; ++c)
        for (std::size_t oy = 0; oy < out_shape[1]; ++oy)
          for (std::size_t ox = 0; ox < out_shape[2]; ++ox) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t by = 0, bx = 0;
            bool found = false;
            for (int ky = 0; ky < layer.kernel; ++ky)
              for (int kx = 0; kx < layer.kernel; ++kx) {
                const long iy = static_cast<long>(oy) * layer.stride - layer.padding + ky;
                const long ix = static_cast<long>(ox) * layer.stride - layer.padding + kx;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.height()) ||
                    ix >= static_cast<long>(in.width()))
                  continue;
                const double v = in.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                // Strict comparison keeps the first row-major maximum on ties.
                if (!found || v > best) {
                  best = v;
                  by = static_cast<std::size_t>(iy);
                  bx = static_cast<std::size_t>(ix);
                  found = true;
                }
              }
            gin.at(c, by, bx) += grad_output.at(c, oy, ox);
          }
      g.inputs.push_back(std::move(gin));
      break;
    }
    case LayerKind::Upsample: {
      Tensor gin(in.shape());
      for (std::size_t c = 0; c < out_shape[0]; ++c)
        for (std::size_t y = 0; y < out_shape[1]; ++y)
          for (std::size_t x = 0; x < out_shape[2]; ++x)
            gin.at(c, y / 2, x / 2) += grad_output.at(c, y, x);
      g.inputs.push_back(std::move(gin));
      break;
    }
    case LayerKind::Concat: {
      std::size_t offset = 0;
      for (const Tensor* t : cached_inputs) {
        Tensor gin(t->shape());
        std::copy_n(grad_output.data() + offset, t->size(), gin.data());
        offset += t->size();
        g.inputs.push_back(std::move(gin));
      }
      break;
    }
  }
  return g;
}

inline LayerGradient backward(const Layer& layer, const ConvParams* params,
                              const Tensor& cached_input, const Tensor& grad_output,
                              bool want_param_grad = true) {
  return backward(layer, params, std::vector<const Tensor*>{&cached_input}, grad_output,
                  want_param_grad);
}

// ---------------------------------------------------------------------------
// Gradient normalization used by the iterative update.

//! gamma * (x - min) / (max - min + epsilon); values land in [0, gamma].
inline Tensor minmax_normalize(const Tensor& raw, double gamma, double epsilon) {
  if (!(gamma > 0) || !(epsilon > 0))
    throw std::invalid_argument("minmax_normalize: gamma and epsilon must be positive");
  Tensor out(raw.shape());
  if (raw.empty()) return out;
  const double lo = raw.min(), hi = raw.max();
  const double denom = hi - lo + epsilon;
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = std::clamp(gamma * (raw[i] - lo) / denom, 0.0, gamma);
  return out;
}

//! gamma * x / (max|x| + epsilon); values land in [-gamma, gamma] with signs kept.
inline Tensor signed_normalize(const Tensor& raw, double gamma, double epsilon) {
  if (!(gamma > 0) || !(epsilon > 0))
    throw std::invalid_argument("signed_normalize: gamma and epsilon must be positive");
  Tensor out(raw.shape());
  if (raw.empty()) return out;
  const double denom = raw.max_abs() + epsilon;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = gamma * raw[i] / denom;
  return out;
}

}  // namespace salattack
