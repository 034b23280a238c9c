#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "salattack/random.hpp"
#include "salattack/tensor.hpp"

namespace testutil {

using salattack::Tensor;

inline Tensor random_tensor(const salattack::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  salattack::Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.values()) v = salattack::uniform(rng, lo, hi);
  return t;
}

//! Central-difference gradient of a scalar function.
inline Tensor numeric_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-6) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

//! ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-12) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

//! Sum of t * weights; a scalar probe for backpropagating a fixed upstream grad.
inline double dot(const Tensor& t, const Tensor& weights) {
  double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * weights[i];
  return s;
}

}  // namespace testutil
