#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "salattack/random.hpp"
#include "salattack/tensor.hpp"

// Saliency agreement (CC, SIM, AUC variants, NSS) and perceptibility (SSIM,
// L2) measures. Maps are evaluated as flat value grids; fixations address the
// last two axes of a (1, H, W) or (H, W) map.

namespace salattack::metrics {

namespace detail {
inline void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

// Variances below this are treated as zero (constant map).
inline constexpr double kFlat = 1e-24;

inline std::pair<std::size_t, std::size_t> map_dims(const Tensor& map) {
  const auto& s = map.shape();
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 3 && s[0] == 1) return {s[1], s[2]};
  throw std::invalid_argument("expected a single-channel map, got " + shape_str(s));
}
}  // namespace detail

//! Pearson correlation of two flattened sequences. Constant input gives 0.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa / n <= detail::kFlat || sbb / n <= detail::kFlat) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double cc(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "cc");
  return pearson(a.values(), b.values());
}

//! Histogram intersection of the two maps after each is scaled to unit sum.
inline double sim(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sim");
  const double sa = a.sum(), sb = b.sum();
  if (a.min() < 0 || b.min() < 0) throw std::invalid_argument("sim: maps must be non-negative");
  if (!(sa > 0) || !(sb > 0)) throw std::invalid_argument("sim: all-zero map");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::min(a[i] / sa, b[i] / sb);
  return std::clamp(s, 0.0, 1.0);
}

//! KL(p || q) between the two maps normalized to distributions.
inline double kl(const Tensor& p_map, const Tensor& q_map, double eps = 1e-8) {
  detail::require_same_shape(p_map, q_map, "kl");
  const double sp = p_map.sum(), sq = q_map.sum();
  if (!(sp > 0) || !(sq > 0)) throw std::invalid_argument("kl: all-zero map");
  double v = 0;
  for (std::size_t i = 0; i < p_map.size(); ++i) {
    const double p = p_map[i] / sp + eps, q = q_map[i] / sq + eps;
    v += p * std::log(p / q);
  }
  return v;
}

struct Fixation {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const Fixation&) const = default;
};

struct FixationSet {
  std::vector<Fixation> points;
  std::size_t height = 0;
  std::size_t width = 0;

  void validate() const {
    if (points.empty()) throw std::invalid_argument("FixationSet: empty");
    for (const auto& f : points)
      if (f.row >= height || f.col >= width)
        throw std::invalid_argument("FixationSet: position out of bounds");
  }
  std::size_t size() const { return points.size(); }
};

//! Mean of the standardized map at the fixations; zero-variance maps give 0.
inline double nss(const Tensor& map, const FixationSet& fix) {
  fix.validate();
  const auto [h, w] = detail::map_dims(map);
  if (h != fix.height || w != fix.width) throw std::invalid_argument("nss: fixation grid mismatch");
  const double n = static_cast<double>(map.size());
  const double mean = map.sum() / n;
  double var = 0;
  for (double v : map.values()) var += (v - mean) * (v - mean);
  var /= n;
  if (var <= detail::kFlat) return 0.0;
  const double sd = std::sqrt(var);
  double s = 0;
  for (const auto& f : fix.points) s += (map[f.row * w + f.col] - mean) / sd;
  return s / static_cast<double>(fix.size());
}

//! Exact rank-based ROC area of map values at positives vs negatives; ties
//! earn half credit.
inline double auc_saliency(const Tensor& map, const FixationSet& positives,
                           const FixationSet& negatives) {
  positives.validate();
  negatives.validate();
  const auto [h, w] = detail::map_dims(map);
  if (positives.height != h || positives.width != w || negatives.height != h || negatives.width != w)
    throw std::invalid_argument("auc: fixation grid mismatch");
  {
    std::set<Fixation> pos(positives.points.begin(), positives.points.end());
    for (const auto& f : negatives.points)
      if (pos.count(f)) throw std::invalid_argument("auc: positives and negatives overlap");
  }
  // (value, is_positive), midranks over ties.
  std::vector<std::pair<double, bool>> all;
  all.reserve(positives.size() + negatives.size());
  for (const auto& f : positives.points) all.emplace_back(map[f.row * w + f.col], true);
  for (const auto& f : negatives.points) all.emplace_back(map[f.row * w + f.col], false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

//! AUC-Borji: negatives drawn uniformly from non-fixated pixels,
//! `negatives_per_draw` each draw, averaged over `draws` seeded draws.
inline double auc_borji(const Tensor& map, const FixationSet& positives, std::uint64_t seed,
                        std::size_t negatives_per_draw = 100, std::size_t draws = 10) {
  positives.validate();
  const auto [h, w] = detail::map_dims(map);
  std::set<Fixation> pos(positives.points.begin(), positives.points.end());
  std::vector<Fixation> pool;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      if (!pos.count({r, c})) pool.push_back({r, c});
  if (pool.empty()) throw std::invalid_argument("auc_borji: no candidate negatives");
  double total = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    Rng rng(derive_seed(seed, d));
    FixationSet neg{{}, h, w};
    auto shuffled = pool;
    const std::size_t k = std::min(negatives_per_draw, shuffled.size());
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(shuffled[i], shuffled[i + uniform_index(rng, shuffled.size() - i)]);
      neg.points.push_back(shuffled[i]);
    }
    total += auc_saliency(map, positives, neg);
  }
  return total / static_cast<double>(draws);
}

//! Shuffled AUC: negatives drawn from fixations of other images (`other_pool`),
//! excluding this map's own fixation positions.
inline double sauc(const Tensor& map, const FixationSet& positives,
                   const std::vector<Fixation>& other_pool, std::uint64_t seed,
                   std::size_t draws = 10) {
  positives.validate();
  const auto [h, w] = detail::map_dims(map);
  std::set<Fixation> pos(positives.points.begin(), positives.points.end());
  std::vector<Fixation> pool;
  for (const auto& f : other_pool)
    if (!pos.count(f) && f.row < h && f.col < w) pool.push_back(f);
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  if (pool.empty()) throw std::invalid_argument("sauc: empty shuffled negative pool");
  double total = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    Rng rng(derive_seed(seed, d));
    auto shuffled = pool;
    FixationSet neg{{}, h, w};
    const std::size_t k = std::min(positives.size(), shuffled.size());
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(shuffled[i], shuffled[i + uniform_index(rng, shuffled.size() - i)]);
      neg.points.push_back(shuffled[i]);
    }
    total += auc_saliency(map, positives, neg);
  }
  return total / static_cast<double>(draws);
}

//! Samples `count` distinct positions with probability proportional to the
//! (non-negative) map values.
inline FixationSet pseudo_fixations(const Tensor& map, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("pseudo_fixations: count must be >= 1");
  const auto [h, w] = detail::map_dims(map);
  std::vector<double> weight(map.values().begin(), map.values().end());
  for (double& v : weight) {
    if (v < 0) throw std::invalid_argument("pseudo_fixations: negative map value");
  }
  const auto positive = static_cast<std::size_t>(
      std::count_if(weight.begin(), weight.end(), [](double v) { return v > 0; }));
  if (positive == 0) throw std::invalid_argument("pseudo_fixations: map sums to zero");
  if (count > positive)
    throw std::invalid_argument("pseudo_fixations: more fixations requested than non-zero pixels");
  Rng rng(seed);
  FixationSet out{{}, h, w};
  double total = std::accumulate(weight.begin(), weight.end(), 0.0);
  for (std::size_t k = 0; k < count; ++k) {
    const double target = unit_uniform(rng) * total;
    double acc = 0;
    std::size_t pick = weight.size();
    for (std::size_t i = 0; i < weight.size(); ++i) {
      if (weight[i] <= 0) continue;
      acc += weight[i];
      pick = i;
      if (acc > target) break;
    }
    out.points.push_back({pick / w, pick % w});
    total -= weight[pick];
    weight[pick] = 0;
    if (total <= 0) total = std::accumulate(weight.begin(), weight.end(), 0.0);
  }
  return out;
}

//! Mean local SSIM over 8x8 windows at stride 4, averaged over channels.
//! Constants assume a unit dynamic range.
inline double ssim(const Tensor& a, const Tensor& b, std::size_t window = 8, std::size_t stride = 4) {
  detail::require_same_shape(a, b, "ssim");
  if (a.rank() != 3) throw std::invalid_argument("ssim: expected CxHxW images");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const std::size_t ch = a.channels(), h = a.height(), w = a.width();
  const std::size_t wy = std::min(window, h), wx = std::min(window, w);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t y0 = 0; y0 + wy <= h; y0 += stride)
      for (std::size_t x0 = 0; x0 + wx <= w; x0 += stride) {
        const double n = static_cast<double>(wy * wx);
        double ma = 0, mb = 0;
        for (std::size_t y = y0; y < y0 + wy; ++y)
          for (std::size_t x = x0; x < x0 + wx; ++x) {
            ma += a.at(c, y, x);
            mb += b.at(c, y, x);
          }
        ma /= n;
        mb /= n;
        double va = 0, vb = 0, cov = 0;
        for (std::size_t y = y0; y < y0 + wy; ++y)
          for (std::size_t x = x0; x < x0 + wx; ++x) {
            const double da = a.at(c, y, x) - ma, db = b.at(c, y, x) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
          }
        va /= n;
        vb /= n;
        cov /= n;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

inline double l2_perceptibility(const Tensor& delta) {
  double s = 0;
  for (double v : delta.values()) s += v * v;
  return std::sqrt(s);
}

//! Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k < j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j - 1);
      i = j;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  return pearson(rx, ry);
}

}  // namespace salattack::metrics
