#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace salattack {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

//! Dense row-major grid of doubles. Feature maps use (channels, height, width).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw std::invalid_argument("Tensor: data length " +
                                  std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
  }

  static Tensor chw(std::size_t c, std::size_t h, std::size_t w,
                    double fill = 0.0) {
    return Tensor({c, h, w}, fill);
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  // Convenience accessors for (C, H, W) tensors.
  std::size_t channels() const { return shape_.at(0); }
  std::size_t height() const { return shape_.at(1); }
  std::size_t width() const { return shape_.at(2); }
  std::size_t plane() const { return shape_.at(1) * shape_.at(2); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> channel(std::size_t c) {
    return std::span<double>(data_).subspan(c * plane(), plane());
  }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * plane(), plane());
  }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }
  double min() const { return *std::min_element(data_.begin(), data_.end()); }
  double max() const { return *std::max_element(data_.begin(), data_.end()); }
  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }
  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  Tensor& operator+=(const Tensor& o) {
    check_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    check_same(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }

  void clamp(double lo, double hi) {
    for (double& v : data_) v = std::clamp(v, lo, hi);
  }

  bool operator==(const Tensor& o) const = default;

 private:
  void check_same(const Tensor& o, const char* op) const {
    if (shape_ != o.shape_)
      throw std::invalid_argument(std::string("Tensor ") + op +
                                  ": shape mismatch " + shape_str(shape_) +
                                  " vs " + shape_str(o.shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// SFT1: "SFT1 <ndims> <d0> ... <dn>\n" followed by little-endian float64 data.

inline void write_sft1(std::ostream& os, const Tensor& t) {
  os << "SFT1 " << t.rank();
  for (auto d : t.shape()) os << ' ' << d;
  os << '\n';
  static_assert(sizeof(double) == 8);
  for (double v : t.values()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    os.write(bytes, 8);
  }
  if (!os) throw std::runtime_error("SFT1: write failed");
}

inline Tensor read_sft1(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("SFT1: missing header");
  std::istringstream hs(header);
  std::string magic;
  std::size_t ndims = 0;
  if (!(hs >> magic >> ndims) || magic != "SFT1")
    throw std::runtime_error("SFT1: bad header '" + header + "'");
  Shape shape(ndims);
  for (auto& d : shape)
    if (!(hs >> d)) throw std::runtime_error("SFT1: truncated dimension list");
  std::vector<double> data(shape_size(shape));
  for (double& v : data) {
    unsigned char bytes[8];
    if (!is.read(reinterpret_cast<char*>(bytes), 8))
      throw std::runtime_error("SFT1: truncated payload");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[b]} << (8 * b);
    std::memcpy(&v, &bits, 8);
  }
  return Tensor(std::move(shape), std::move(data));
}

inline void save_sft1(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("SFT1: cannot open '" + path + "' for writing");
  write_sft1(os, t);
}

inline Tensor load_sft1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("SFT1: cannot open '" + path + "'");
  return read_sft1(is);
}

}  // namespace salattack
