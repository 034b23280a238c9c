#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "salattack/dataset.hpp"
#include "salattack/model.hpp"

namespace salattack {

struct TrainOptions {
  std::size_t epochs = 30;
  double learning_rate = 0.3;
  std::uint64_t seed = 1;
};

struct TrainResult {
  ModelWeights weights;
  double initial_loss = 0;            // mean BCE before any update
  std::vector<double> epoch_losses;   // mean BCE seen during each epoch
  double final_loss() const { return epoch_losses.empty() ? initial_loss : epoch_losses.back(); }
};

namespace detail {

// Logit layer feeding the sigmoid head.
inline std::size_t logit_layer(const ModelSpec& spec) {
  const auto src = spec.sources_of(spec.output_layer).front();
  if (src == kImageSource) throw std::invalid_argument("model has no layer before its sigmoid head");
  return static_cast<std::size_t>(src);
}

// BCE target: the ground-truth mixture rescaled so its peak is 1.
inline Tensor bce_target(const Tensor& saliency) {
  Tensor t = saliency;
  const double peak = t.max();
  if (peak > 0) t *= 1.0 / peak;
  return t;
}

// Mean binary cross-entropy from logits, and its gradient w.r.t. the logits.
inline double bce_from_logits(const Tensor& logits, const Tensor& target, Tensor* grad) {
  const double n = static_cast<double>(logits.size());
  double loss = 0;
  if (grad) *grad = Tensor(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i], y = target[i];
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    if (grad) (*grad)[i] = (detail::sigmoid(z) - y) / n;
  }
  return loss / n;
}

}  // namespace detail

inline double mean_bce(const ModelSpec& spec, const ModelWeights& weights,
                       const std::vector<Sample>& data) {
  const std::size_t logit = detail::logit_layer(spec);
  double total = 0;
  for (const auto& s : data) {
    const auto trace = forward_trace(spec, weights, s.image, logit);
    total += detail::bce_from_logits(trace[logit], detail::bce_target(s.saliency), nullptr);
  }
  return total / static_cast<double>(data.size());
}

//! Plain per-sample SGD on binary cross-entropy, starting from the seeded
//! initialization. Deterministic for a given seed and dataset.
inline TrainResult train_toy(const ModelSpec& spec, const std::vector<Sample>& data,
                             const TrainOptions& opt,
                             const std::function<void(std::size_t, double)>& on_epoch = {}) {
  if (data.empty()) throw std::invalid_argument("train_toy: empty dataset");
  if (!(opt.learning_rate > 0)) throw std::invalid_argument("train_toy: learning rate must be positive");
  spec.validate();
  TrainResult r{init_weights(spec, opt.seed), 0, {}};
  r.initial_loss = mean_bce(spec, r.weights, data);
  const std::size_t logit = detail::logit_layer(spec);

  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(opt.seed, 1000 + epoch));
    shuffle(order, rng);
    double epoch_loss = 0;
    for (std::size_t idx : order) {
      const Sample& s = data[idx];
      const auto trace = forward_trace(spec, r.weights, s.image, logit);
      Tensor grad;
      const double loss = detail::bce_from_logits(trace[logit], detail::bce_target(s.saliency), &grad);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_toy: loss diverged at epoch " + std::to_string(epoch));
      epoch_loss += loss;
      auto bp = backprop_from(spec, r.weights, trace, logit, grad, true, false);
      for (std::size_t i = 0; i < spec.size(); ++i) {
        if (!bp.grad_params[i]) continue;
        ConvParams* p = r.weights.mutable_params(i);
        p->weight -= bp.grad_params[i]->weight * opt.learning_rate;
        p->bias -= bp.grad_params[i]->bias * opt.learning_rate;
      }
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("train_toy: loss diverged at epoch " + std::to_string(epoch));
    r.epoch_losses.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return r;
}

}  // namespace salattack
