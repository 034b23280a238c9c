#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "salattack/random.hpp"
#include "salattack/tensor.hpp"

namespace salattack {

struct Sample {
  Tensor image;     // (3, H, W) in [0, 1]
  Tensor saliency;  // (1, H, W), sums to 1
};

struct Blob {
  double row = 0;
  double col = 0;
  double sigma = 4.0;
  double amplitude = 0.3;
};

struct BlobImageOptions {
  double sigma_min = 3.5;
  double sigma_max = 5.5;
  double amplitude_min = 0.06;
  double amplitude_max = 0.2;
  double background_min = 0.3;
  double background_max = 0.5;
  double texture = 0.03;    // amplitude of the smooth texture field
  double grain = 0.08;      // std-dev of per-pixel noise
  std::size_t margin = 8;   // minimum distance of blob centres from the border
};

namespace detail {

// Smooth random field: bilinear interpolation of a coarse uniform grid.
inline std::vector<double> smooth_field(std::size_t h, std::size_t w, std::size_t cell, Rng& rng) {
  const std::size_t gh = h / cell + 2, gw = w / cell + 2;
  std::vector<double> grid(gh * gw);
  for (double& v : grid) v = uniform(rng, -1.0, 1.0);
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double fy = static_cast<double>(y) / static_cast<double>(cell);
      const double fx = static_cast<double>(x) / static_cast<double>(cell);
      const auto y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
      const double ty = fy - static_cast<double>(y0), tx = fx - static_cast<double>(x0);
      const double v00 = grid[y0 * gw + x0], v01 = grid[y0 * gw + x0 + 1];
      const double v10 = grid[(y0 + 1) * gw + x0], v11 = grid[(y0 + 1) * gw + x0 + 1];
      out[y * w + x] = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
    }
  return out;
}

}  // namespace detail

//! Renders bright Gaussian blobs on a textured noise background. The
//! ground-truth map is the amplitude-weighted blob mixture scaled to unit sum.
inline Sample render_blob_image(std::size_t height, std::size_t width, const std::vector<Blob>& blobs,
                                std::uint64_t seed, const BlobImageOptions& opt = {}) {
  Rng rng(seed);
  Sample s{Tensor({3, height, width}), Tensor({1, height, width})};
  const double base = uniform(rng, opt.background_min, opt.background_max);
  const auto texture = detail::smooth_field(height, width, 6, rng);
  double tint[3];
  for (double& t : tint) t = uniform(rng, -0.05, 0.05);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      double bump = 0;
      double sal = 0;
      for (const auto& b : blobs) {
        const double dy = static_cast<double>(y) - b.row, dx = static_cast<double>(x) - b.col;
        const double g = std::exp(-(dy * dy + dx * dx) / (2 * b.sigma * b.sigma));
        bump += b.amplitude * g;
        sal += b.amplitude * g;
      }
      const double shade = base + opt.texture * texture[y * width + x];
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = shade + tint[c] + bump + opt.grain * normal(rng);
        s.image.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
      s.saliency.at(0, y, x) = sal;
    }
  const double total = s.saliency.sum();
  if (total > 0) s.saliency *= 1.0 / total;
  return s;
}

inline Blob random_blob(std::size_t height, std::size_t width, Rng& rng,
                        const BlobImageOptions& opt = {}) {
  if (height <= 2 * opt.margin || width <= 2 * opt.margin)
    throw std::invalid_argument("random_blob: image " + std::to_string(height) + "x" + std::to_string(width) +
                                " leaves no room inside a margin of " + std::to_string(opt.margin));
  Blob b;
  b.row = static_cast<double>(opt.margin + uniform_index(rng, height - 2 * opt.margin));
  b.col = static_cast<double>(opt.margin + uniform_index(rng, width - 2 * opt.margin));
  b.sigma = uniform(rng, opt.sigma_min, opt.sigma_max);
  b.amplitude = uniform(rng, opt.amplitude_min, opt.amplitude_max);
  return b;
}

//! `count` samples with 1-3 blobs each; deterministic per seed.
inline std::vector<Sample> generate_synthetic_dataset(std::size_t count, std::size_t height,
                                                      std::size_t width, std::uint64_t seed,
                                                      const BlobImageOptions& opt = {}) {
  if (count < 1) throw std::invalid_argument("generate_synthetic_dataset: count must be >= 1");
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    const std::size_t n = 1 + uniform_index(rng, 3);
    std::vector<Blob> blobs;
    for (std::size_t k = 0; k < n; ++k) blobs.push_back(random_blob(height, width, rng, opt));
    out.push_back(render_blob_image(height, width, blobs, rng(), opt));
  }
  return out;
}

//! Single-blob image with the blob centred at (row, col), for paired
//! original/guide experiments.
inline Sample single_blob_image(std::size_t height, std::size_t width, std::size_t row,
                                std::size_t col, std::uint64_t seed,
                                const BlobImageOptions& opt = {}) {
  Rng rng(seed);
  Blob b{static_cast<double>(row), static_cast<double>(col),
         uniform(rng, opt.sigma_min, opt.sigma_max),
         uniform(rng, opt.amplitude_min, opt.amplitude_max)};
  return render_blob_image(height, width, {b}, rng(), opt);
}

struct AttackPair {
  Sample original;  // blob in the left third
  Sample guide;     // blob in the right third
};

//! Seeded original/guide pairs with single blobs on opposite sides.
inline std::vector<AttackPair> make_attack_pairs(std::size_t count, std::size_t height, std::size_t width,
                                                 std::uint64_t seed, const BlobImageOptions& opt = {}) {
  const std::size_t lo_row = opt.margin, hi_row = height - opt.margin;
  const std::size_t band = std::max<std::size_t>(1, width / 6);
  if (hi_row <= lo_row || width < 12) throw std::invalid_argument("make_attack_pairs: image too small");
  std::vector<AttackPair> pairs;
  for (std::size_t k = 0; k < count; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t r0 = lo_row + uniform_index(rng, hi_row - lo_row);
    const std::size_t c0 = width / 5 + uniform_index(rng, band);
    const std::size_t r1 = lo_row + uniform_index(rng, hi_row - lo_row);
    const std::size_t c1 = width - width / 5 - 1 - uniform_index(rng, band);
    const auto s0 = rng(), s1 = rng();
    pairs.push_back({single_blob_image(height, width, r0, c0, s0, opt),
                     single_blob_image(height, width, r1, c1, s1, opt)});
  }
  return pairs;
}

}  // namespace salattack
