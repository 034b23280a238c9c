#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "salattack/losses.hpp"
#include "salattack/metrics.hpp"
#include "salattack/model.hpp"
#include "salattack/random.hpp"

namespace salattack {

enum class AttackMode { Targeted, Nontargeted };
enum class ChannelSelection { UniformStride, Explicit, All };
enum class NormalizationMode { LiteralMinmax, Signed };
enum class TerminationMetric { CC, SIM };
enum class Termination { ThresholdMet, MaxIterations };

inline const char* to_string(AttackMode m) { return m == AttackMode::Targeted ? "targeted" : "nontargeted"; }
inline const char* to_string(NormalizationMode m) {
  return m == NormalizationMode::LiteralMinmax ? "literal-minmax" : "signed";
}
inline const char* to_string(Termination t) {
  return t == Termination::ThresholdMet ? "threshold-met" : "max-iterations";
}
inline const char* to_string(ChannelSelection s) {
  switch (s) {
    case ChannelSelection::UniformStride: return "uniform-stride";
    case ChannelSelection::Explicit: return "explicit";
    case ChannelSelection::All: return "all";
  }
  return "?";
}

inline AttackMode attack_mode_from_string(const std::string& s) {
  if (s == "targeted") return AttackMode::Targeted;
  if (s == "nontargeted") return AttackMode::Nontargeted;
  throw std::invalid_argument("unknown attack mode '" + s + "'");
}
inline NormalizationMode normalization_from_string(const std::string& s) {
  if (s == "literal-minmax" || s == "minmax" || s == "literal") return NormalizationMode::LiteralMinmax;
  if (s == "signed") return NormalizationMode::Signed;
  throw std::invalid_argument("unknown normalization mode '" + s + "'");
}
inline ChannelSelection selection_from_string(const std::string& s) {
  if (s == "uniform-stride" || s == "uniform") return ChannelSelection::UniformStride;
  if (s == "explicit") return ChannelSelection::Explicit;
  if (s == "all") return ChannelSelection::All;
  throw std::invalid_argument("unknown channel selection '" + s + "'");
}

struct AttackConfig {
  AttackMode mode = AttackMode::Targeted;
  std::size_t attacked_layer = 0;
  LossKind loss = LossKind::KL;
  MixWeights mix;
  std::size_t n_channels = 1;
  ChannelSelection selection = ChannelSelection::UniformStride;
  std::vector<std::size_t> explicit_indices;
  double alpha = 2e-3;
  double gamma = 0.07;
  double epsilon = 1e-8;
  double tau1 = 0.95;  // targeted: stop once D1(F(G), F(adv)) >= tau1
  double tau2 = 0.30;  // nontargeted: stop once D1(F(I), F(adv)) <= tau2
  std::size_t max_iterations = 500;
  NormalizationMode normalization = NormalizationMode::LiteralMinmax;
  bool clip_to_image_range = true;
  TerminationMetric termination_metric = TerminationMetric::CC;
  // Seeds the random direction used when a nontargeted step starts from a
  // point where the ascent gradient vanishes exactly (t = 0 for KL, CC, L1).
  std::uint64_t seed = 0;
  // Test hook: reference-side channel indices deliberately differing from
  // the adversarial-side selection. Empty in normal operation.
  std::vector<std::size_t> mismatched_reference_indices;

  void validate(std::size_t layer_channels) const {
    if (n_channels == 0 || n_channels > layer_channels)
      throw std::invalid_argument("attack: n-channels must be in [1, " + std::to_string(layer_channels) + "]");
    if (!(alpha > 0) || !(gamma > 0) || !(epsilon > 0))
      throw std::invalid_argument("attack: alpha, gamma and epsilon must be positive");
    if (loss == LossKind::Mix) mix.validate();
  }
};

//! N scaled to the layer width: 32 for layers with at least 512 channels,
//! channels/32 otherwise, never below 1.
inline std::size_t default_channel_count(std::size_t channels) {
  return channels >= 512 ? 32 : std::max<std::size_t>(1, channels / 32);
}

struct IterationRecord {
  std::size_t iteration = 0;
  double loss = 0;
  double d1 = 0;
  std::vector<double> max_abs_delta;  // per image channel

  double max_abs_delta_overall() const {
    double m = 0;
    for (double v : max_abs_delta) m = std::max(m, v);
    return m;
  }
};

struct AttackResult {
  Tensor original;
  Tensor adversarial;
  Tensor perturbation;  // adversarial - original
  std::size_t iterations_used = 0;
  Termination termination = Termination::MaxIterations;
  NormalizationMode normalization = NormalizationMode::LiteralMinmax;
  std::vector<std::size_t> channels;
  std::vector<IterationRecord> log;
};

class AttackError : public std::runtime_error {
 public:
  AttackError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

//! Channel indices of the sparse feature stack. uniform-stride yields
//! {0, s, 2s, ...} with s = floor(total / n).
inline std::vector<std::size_t> select_channels(std::size_t total, std::size_t n, ChannelSelection selection,
                                                const std::vector<std::size_t>& explicit_indices = {}) {
  switch (selection) {
    case ChannelSelection::All: {
      std::vector<std::size_t> all(total);
      std::iota(all.begin(), all.end(), 0);
      return all;
    }
    case ChannelSelection::Explicit: {
      if (explicit_indices.empty()) throw std::invalid_argument("select_channels: no explicit indices");
      for (auto i : explicit_indices)
        if (i >= total) throw std::invalid_argument("select_channels: index " + std::to_string(i) + " out of range");
      return explicit_indices;
    }
    case ChannelSelection::UniformStride: {
      if (n < 1 || n > total)
        throw std::invalid_argument("select_channels: n=" + std::to_string(n) + " outside [1, " +
                                    std::to_string(total) + "]");
      const std::size_t stride = total / n;
      std::vector<std::size_t> idx(n);
      for (std::size_t k = 0; k < n; ++k) idx[k] = k * stride;
      return idx;
    }
  }
  return {};
}

//! Copies the listed channels of a (C, h, w) map into an (N, h, w) stack.
inline Tensor gather_channels(const Tensor& maps, const std::vector<std::size_t>& idx) {
  Tensor out({idx.size(), maps.height(), maps.width()});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    auto src = maps.channel(idx[k]);
    std::copy(src.begin(), src.end(), out.channel(k).begin());
  }
  return out;
}

//! Inverse of gather_channels: places the stack back at its channel slots
//! (zeros elsewhere), accumulating if an index repeats.
inline Tensor scatter_channels(const Tensor& stack, const std::vector<std::size_t>& idx, const Shape& full) {
  Tensor out(full);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    auto src = stack.channel(k);
    auto dst = out.channel(idx[k]);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }
  return out;
}

inline double termination_score(TerminationMetric m, const Tensor& reference_pred, const Tensor& pred) {
  switch (m) {
    case TerminationMetric::CC: return metrics::cc(reference_pred, pred);
    case TerminationMetric::SIM: return metrics::sim(reference_pred, pred);
  }
  return 0;
}

//! Black-box query of the full model's saliency map.
using SaliencyOracle = std::function<Tensor(const Tensor&)>;

//! Iterative sparse feature-space attack. Gradients flow only through the
//! layers feeding cfg.attacked_layer (read via `weights`); the termination
//! test only queries `oracle` for output maps.
template <WeightSource W>
AttackResult run_attack(const ModelSpec& spec, const W& weights, const SaliencyOracle& oracle,
                        const Tensor& original, const Tensor& reference, const AttackConfig& cfg) {
  if (original.shape() != reference.shape())
    throw std::invalid_argument("attack: original and reference images differ in shape");
  if (cfg.attacked_layer >= spec.size())
    throw std::out_of_range("attack: attacked layer " + std::to_string(cfg.attacked_layer) + " out of range");
  const Shape layer_shape = spec.layer_shapes()[cfg.attacked_layer];
  cfg.validate(layer_shape[0]);
  check_image(spec, original);
  check_image(spec, reference);

  const auto adv_idx = select_channels(layer_shape[0], cfg.n_channels, cfg.selection, cfg.explicit_indices);
  const auto ref_idx = cfg.mismatched_reference_indices.empty() ? adv_idx : cfg.mismatched_reference_indices;
  if (ref_idx.size() != adv_idx.size())
    throw std::invalid_argument("attack: reference channel list length differs from selection");

  // The reference stack and prediction are computed once and frozen.
  const Tensor ref_stack = gather_channels(
      forward_trace(spec, weights, reference, cfg.attacked_layer)[cfg.attacked_layer], ref_idx);
  const Tensor ref_pred = oracle(reference);
  const bool targeted = cfg.mode == AttackMode::Targeted;
  const double sign = targeted ? -1.0 : 1.0;

  AttackResult r;
  r.original = original;
  r.adversarial = original;
  r.normalization = cfg.normalization;
  r.channels = adv_idx;

  for (std::size_t t = 0;; ++t) {
    const Tensor pred = oracle(r.adversarial);
    const double d1 = termination_score(cfg.termination_metric, ref_pred, pred);
    const auto trace = forward_trace(spec, weights, r.adversarial, cfg.attacked_layer, false);
    const auto lv = losses::distance(cfg.loss, gather_channels(trace[cfg.attacked_layer], adv_idx),
                                     ref_stack, cfg.mix);
    IterationRecord rec{t, lv.value, d1, {}};
    for (std::size_t c = 0; c < original.channels(); ++c) {
      double m = 0;
      for (std::size_t i = 0; i < original.plane(); ++i)
        m = std::max(m, std::abs(r.adversarial.channel(c)[i] - original.channel(c)[i]));
      rec.max_abs_delta.push_back(m);
    }
    r.log.push_back(std::move(rec));
    if (!std::isfinite(lv.value) || !std::isfinite(d1) || !lv.grad.all_finite())
      throw AttackError("attack: non-finite loss or gradient", t);

    const bool met = targeted ? d1 >= cfg.tau1 : d1 <= cfg.tau2;
    if (met || t >= cfg.max_iterations) {
      r.iterations_used = t;
      r.termination = met ? Termination::ThresholdMet : Termination::MaxIterations;
      break;
    }

    const Tensor grad_layer = scatter_channels(lv.grad, adv_idx, trace[cfg.attacked_layer].shape());
    Tensor raw = grad_input_from_layer(spec, weights, trace, cfg.attacked_layer, grad_layer);
    if (!raw.all_finite()) throw AttackError("attack: non-finite image gradient", t);
    if (!targeted && raw.max_abs() == 0) {
      Rng rng(derive_seed(cfg.seed, t));
      for (double& v : raw.values()) v = uniform(rng, -1.0, 1.0);
    }
    const Tensor step = cfg.normalization == NormalizationMode::LiteralMinmax
                            ? minmax_normalize(raw, cfg.gamma, cfg.epsilon)
                            : signed_normalize(raw, cfg.gamma, cfg.epsilon);
    for (std::size_t i = 0; i < step.size(); ++i) r.adversarial[i] += sign * cfg.alpha * step[i];
    if (cfg.clip_to_image_range) r.adversarial.clamp(0.0, 1.0);
  }
  r.perturbation = r.adversarial - r.original;
  return r;
}

inline SaliencyOracle model_oracle(const ModelSpec& spec, const ModelWeights& weights, bool check_range = true) {
  return [&spec, &weights, check_range](const Tensor& image) {
    return predict(spec, weights, image, check_range);
  };
}

inline AttackResult targeted_attack(const ModelSpec& spec, const ModelWeights& weights, const Tensor& original,
                                    const Tensor& guide, AttackConfig cfg) {
  if (cfg.mode != AttackMode::Targeted) throw std::invalid_argument("targeted_attack: config mode is not targeted");
  return run_attack(spec, weights, model_oracle(spec, weights, cfg.clip_to_image_range), original, guide, cfg);
}

inline AttackResult nontargeted_attack(const ModelSpec& spec, const ModelWeights& weights, const Tensor& original,
                                       AttackConfig cfg) {
  if (cfg.mode != AttackMode::Nontargeted)
    throw std::invalid_argument("nontargeted_attack: config mode is not nontargeted");
  return run_attack(spec, weights, model_oracle(spec, weights, cfg.clip_to_image_range), original, original, cfg);
}

//! Runs the attack as configured; if literal min-max normalization does not
//! reach the threshold, reruns with signed normalization and reports it.
inline AttackResult attack_with_fallback(const ModelSpec& spec, const ModelWeights& weights, const Tensor& original,
                                         const Tensor& guide, const AttackConfig& cfg,
                                         const std::function<void(const std::string&)>& log = {}) {
  auto run = [&](const AttackConfig& c) {
    return c.mode == AttackMode::Targeted ? targeted_attack(spec, weights, original, guide, c)
                                          : nontargeted_attack(spec, weights, original, c);
  };
  auto r = run(cfg);
  if (r.termination == Termination::ThresholdMet || cfg.normalization != NormalizationMode::LiteralMinmax)
    return r;
  if (log)
    log(std::string("literal-minmax ") + to_string(cfg.mode) + " attack on layer " +
        std::to_string(cfg.attacked_layer) + " did not reach its threshold in " +
        std::to_string(cfg.max_iterations) + " iterations; rerunning with signed normalization");
  AttackConfig signed_cfg = cfg;
  signed_cfg.normalization = NormalizationMode::Signed;
  return run(signed_cfg);
}

// ---------------------------------------------------------------------------

struct PerturbationStats {
  std::vector<double> max_abs_per_channel;
  double l2 = 0;
  double ssim = 1;
  double sparsity = 1;  // fraction of |delta| entries below kSparseThreshold
};

inline constexpr double kSparseThreshold = 1e-4;

inline PerturbationStats perturbation_stats(const Tensor& original, const Tensor& adversarial) {
  const Tensor delta = adversarial - original;
  PerturbationStats s;
  for (std::size_t c = 0; c < delta.channels(); ++c) {
    double m = 0;
    for (double v : delta.channel(c)) m = std::max(m, std::abs(v));
    s.max_abs_per_channel.push_back(m);
  }
  s.l2 = metrics::l2_perceptibility(delta);
  s.ssim = metrics::ssim(original, adversarial);
  std::size_t small = 0;
  for (double v : delta.values()) small += std::abs(v) < kSparseThreshold;
  s.sparsity = static_cast<double>(small) / static_cast<double>(delta.size());
  return s;
}

inline PerturbationStats perturbation_stats(const AttackResult& r) {
  return perturbation_stats(r.original, r.adversarial);
}

//! Writes adversarial.sft1, perturbation.sft1 and log.csv into dir.
inline void save_attack_result(const std::filesystem::path& dir, const AttackResult& r) {
  std::filesystem::create_directories(dir);
  save_sft1((dir / "adversarial.sft1").string(), r.adversarial);
  save_sft1((dir / "perturbation.sft1").string(), r.perturbation);
  std::ofstream os(dir / "log.csv");
  os << "iteration,loss,d1,max-abs-delta\n";
  os << std::setprecision(17);
  for (const auto& rec : r.log)
    os << rec.iteration << ',' << rec.loss << ',' << rec.d1 << ',' << rec.max_abs_delta_overall() << '\n';
  if (!os) throw std::runtime_error("cannot write " + (dir / "log.csv").string());
}

}  // namespace salattack
