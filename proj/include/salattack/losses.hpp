#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "salattack/tensor.hpp"

// Attack losses between a stack of adversarial maps and a stack of reference
// maps, both (N, h, w). Every loss returns its value and the gradient with
// respect to the adversarial stack.

namespace salattack {

struct LossValue {
  double value = 0;
  Tensor grad;  // d(value)/d(adv), same shape as adv
};

enum class LossKind { KL, CC, NSS, L1, Mix };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::KL: return "kl";
    case LossKind::CC: return "cc";
    case LossKind::NSS: return "nss";
    case LossKind::L1: return "l1";
    case LossKind::Mix: return "mix";
  }
  return "?";
}

inline LossKind loss_kind_from_string(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto k : {LossKind::KL, LossKind::CC, LossKind::NSS, LossKind::L1, LossKind::Mix})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown loss '" + s + "'");
}

//! Weights of the KL, CC, NSS and L1 terms of the mixed loss.
struct MixWeights {
  double kl = 1, cc = 1, nss = 1, l1 = 1;

  void validate() const {
    if (kl < 0 || cc < 0 || nss < 0 || l1 < 0)
      throw std::invalid_argument("mix weights must be non-negative");
    if (!(kl + cc + nss + l1 > 0)) throw std::invalid_argument("mix weights must not all be zero");
  }
};

namespace losses {

inline constexpr double kEpsilon = 1e-8;
inline constexpr double kFlat = 1e-24;
inline constexpr double kFixationQuantile = 0.9;

namespace detail {

inline void check_stacks(const Tensor& adv, const Tensor& ref, const char* who) {
  if (adv.shape() != ref.shape())
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_str(adv.shape()) +
                                " vs " + shape_str(ref.shape()));
  if (adv.rank() != 3 || adv.empty())
    throw std::invalid_argument(std::string(who) + ": expected a non-empty (N, h, w) stack");
}

// Shift by the minimum, then scale to a distribution. Epsilon is added to every
// entry (and m*epsilon to the divisor) so the divisor is never zero and the
// result sums to exactly one.
struct Normalized {
  std::vector<double> p;
  std::size_t argmin = 0;
  double denom = 0;
};

inline Normalized normalize_map(std::span<const double> a) {
  Normalized n;
  n.argmin = static_cast<std::size_t>(std::min_element(a.begin(), a.end()) - a.begin());
  const double lo = a[n.argmin];
  n.p.resize(a.size());
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (n.p[i] = a[i] - lo);
  n.denom = s + kEpsilon * static_cast<double>(a.size());
  for (double& v : n.p) v = (v + kEpsilon) / n.denom;
  return n;
}

// Indices of the top (1 - quantile) fraction of values; ties resolved by
// position so the mask is deterministic.
inline std::vector<std::size_t> fixation_mask(std::span<const double> ref) {
  const std::size_t n = ref.size();
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil((1.0 - kFixationQuantile) * static_cast<double>(n))));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return ref[i] > ref[j]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

//! KL(p || q) = sum p ln(p / q) for strictly positive distributions.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  double v = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) v += p[i] * std::log(p[i] / q[i]);
  return v;
}

//! Mean over channels of KL(normalize(adv_n) || normalize(ref_n)).
inline LossValue kl_channelwise(const Tensor& adv, const Tensor& ref) {
  detail::check_stacks(adv, ref, "kl_channelwise");
  const std::size_t channels = adv.channels();
  const double inv_n = 1.0 / static_cast<double>(channels);
  LossValue out{0, Tensor(adv.shape())};
  std::vector<double> u;
  for (std::size_t c = 0; c < channels; ++c) {
    const auto a = detail::normalize_map(adv.channel(c));
    const auto q = detail::normalize_map(ref.channel(c));
    const std::size_t m = a.p.size();
    u.assign(m, 0);
    double u_dot_p = 0;
    for (std::size_t i = 0; i < m; ++i) {
      u[i] = std::log(a.p[i] / q.p[i]);
      u_dot_p += u[i] * a.p[i];
    }
    out.value += kl_divergence(a.p, q.p) * inv_n;
    // d/ds_k = (u_k - <u, p>) / denom with u = ln(p / q); the +1 of d(p ln p)
    // cancels because p sums to one. The shift is routed through the argmin.
    auto g = out.grad.channel(c);
    double total = 0;
    for (std::size_t i = 0; i < m; ++i) {
      g[i] = inv_n * (u[i] - u_dot_p) / a.denom;
      total += g[i];
    }
    g[a.argmin] -= total;
  }
  return out;
}

//! Mean over channels of the Pearson correlation (a similarity in [-1, 1]).
//! Channels where either map is constant contribute 0.
inline LossValue cc_loss(const Tensor& adv, const Tensor& ref) {
  detail::check_stacks(adv, ref, "cc_loss");
  const std::size_t channels = adv.channels();
  const double inv_c = 1.0 / static_cast<double>(channels);
  LossValue out{0, Tensor(adv.shape())};
  for (std::size_t c = 0; c < channels; ++c) {
    const auto a = adv.channel(c);
    const auto b = ref.channel(c);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double saa = 0, sbb = 0, sab = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
      sab += (a[i] - ma) * (b[i] - mb);
    }
    if (saa / n <= kFlat || sbb / n <= kFlat) continue;
    const double na = std::sqrt(saa), nb = std::sqrt(sbb);
    const double r = sab / (na * nb);
    out.value += r * inv_c;
    auto g = out.grad.channel(c);
    for (std::size_t i = 0; i < a.size(); ++i)
      g[i] = inv_c * ((b[i] - mb) / (na * nb) - r * (a[i] - ma) / saa);
  }
  return out;
}

//! Mean over channels of the standardized adv map averaged at pseudo-fixations
//! (top 10% of the reference map). Zero-variance adv channels contribute 0.
inline LossValue nss_loss(const Tensor& adv, const Tensor& ref) {
  detail::check_stacks(adv, ref, "nss_loss");
  const std::size_t channels = adv.channels();
  const double inv_c = 1.0 / static_cast<double>(channels);
  LossValue out{0, Tensor(adv.shape())};
  for (std::size_t c = 0; c < channels; ++c) {
    const auto a = adv.channel(c);
    const auto mask = detail::fixation_mask(ref.channel(c));
    const double n = static_cast<double>(a.size());
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double var = 0;
    for (double v : a) var += (v - mean) * (v - mean);
    var /= n;
    if (var <= kFlat) continue;
    const double sd = std::sqrt(var);
    const double m = static_cast<double>(mask.size());
    double zbar = 0;
    for (auto i : mask) zbar += (a[i] - mean) / sd;
    zbar /= m;
    out.value += zbar * inv_c;
    auto g = out.grad.channel(c);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double zk = (a[k] - mean) / sd;
      g[k] = inv_c * (-1.0 / n - zbar * zk / n) / sd;
    }
    for (auto i : mask) g[i] += inv_c / (m * sd);
  }
  return out;
}

//! Mean absolute difference; the gradient uses sign(0) = 0.
inline LossValue l1_loss(const Tensor& adv, const Tensor& ref) {
  detail::check_stacks(adv, ref, "l1_loss");
  const double inv = 1.0 / static_cast<double>(adv.size());
  LossValue out{0, Tensor(adv.shape())};
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const double d = adv[i] - ref[i];
    out.value += std::abs(d) * inv;
    out.grad[i] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
  }
  return out;
}

//! NSS expressed as a distance: NSS(ref, ref) - NSS(adv, ref). Zero at
//! adv = ref, same gradient as -NSS.
inline LossValue nss_distance(const Tensor& adv, const Tensor& ref) {
  auto self = nss_loss(ref, ref);
  auto v = nss_loss(adv, ref);
  v.value = self.value - v.value;
  v.grad *= -1.0;
  return v;
}

//! 1 - CC as a distance.
inline LossValue cc_distance(const Tensor& adv, const Tensor& ref) {
  auto v = cc_loss(adv, ref);
  v.value = 1.0 - v.value;
  v.grad *= -1.0;
  return v;
}

//! Weighted sum of KL, (1 - CC), NSS distance and L1.
inline LossValue mix_loss(const Tensor& adv, const Tensor& ref, const MixWeights& w) {
  w.validate();
  detail::check_stacks(adv, ref, "mix_loss");
  LossValue out{0, Tensor(adv.shape())};
  auto add = [&](double weight, LossValue v) {
    if (weight == 0) return;
    out.value += weight * v.value;
    out.grad += v.grad * weight;
  };
  add(w.kl, kl_channelwise(adv, ref));
  add(w.cc, cc_distance(adv, ref));
  add(w.nss, nss_distance(adv, ref));
  add(w.l1, l1_loss(adv, ref));
  return out;
}

//! The attack objective for a loss kind, always oriented as a distance:
//! targeted attacks descend it, nontargeted attacks ascend it.
inline LossValue distance(LossKind kind, const Tensor& adv, const Tensor& ref,
                          const MixWeights& mix = {}) {
  switch (kind) {
    case LossKind::KL: return kl_channelwise(adv, ref);
    case LossKind::CC: return cc_distance(adv, ref);
    case LossKind::NSS: return nss_distance(adv, ref);
    case LossKind::L1: return l1_loss(adv, ref);
    case LossKind::Mix: return mix_loss(adv, ref, mix);
  }
  throw std::invalid_argument("unknown loss kind");
}

//! Mix weights that put each component on a comparable scale: the reciprocal
//! of each component's mean magnitude over the calibration pairs.
inline MixWeights calibrate_mix_weights(const std::vector<std::pair<Tensor, Tensor>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("calibrate_mix_weights: no pairs");
  std::array<double, 4> mag{};
  for (const auto& [adv, ref] : pairs) {
    mag[0] += std::abs(kl_channelwise(adv, ref).value);
    mag[1] += std::abs(cc_distance(adv, ref).value);
    mag[2] += std::abs(nss_distance(adv, ref).value);
    mag[3] += std::abs(l1_loss(adv, ref).value);
  }
  auto inv = [&](double m) {
    m /= static_cast<double>(pairs.size());
    return m > 1e-12 ? 1.0 / m : 1.0;
  };
  return MixWeights{inv(mag[0]), inv(mag[1]), inv(mag[2]), inv(mag[3])};
}

}  // namespace losses
}  // namespace salattack
