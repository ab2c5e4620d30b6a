#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sparsespec/error.hpp"

namespace sparsespec {

using Complex = std::complex<double>;

// Dense rank-4 tensor in row-major (d0, d1, d2, d3) order. The last two
// dimensions are the spatial / spectral map; `map(a, b)` returns the
// contiguous d2*d3 block for one (d0, d1) pair.
template <class T>
class Tensor4 {
 public:
  using value_type = T;
  using Shape = std::array<std::size_t, 4>;

  Tensor4() = default;
  Tensor4(std::size_t d0, std::size_t d1, std::size_t d2, std::size_t d3, T fill = T{})
      : shape_{d0, d1, d2, d3}, data_(d0 * d1 * d2 * d3, fill) {}
  explicit Tensor4(Shape s, T fill = T{}) : Tensor4(s[0], s[1], s[2], s[3], fill) {}

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t dim(std::size_t axis) const noexcept { return shape_[axis]; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
  [[nodiscard]] std::size_t map_size() const noexcept { return shape_[2] * shape_[3]; }

  T& operator()(std::size_t a, std::size_t b, std::size_t y, std::size_t x) noexcept {
    return data_[((a * shape_[1] + b) * shape_[2] + y) * shape_[3] + x];
  }
  const T& operator()(std::size_t a, std::size_t b, std::size_t y, std::size_t x) const noexcept {
    return data_[((a * shape_[1] + b) * shape_[2] + y) * shape_[3] + x];
  }

  std::span<T> map(std::size_t a, std::size_t b) noexcept {
    return {data_.data() + (a * shape_[1] + b) * map_size(), map_size()};
  }
  std::span<const T> map(std::size_t a, std::size_t b) const noexcept {
    return {data_.data() + (a * shape_[1] + b) * map_size(), map_size()};
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

// Real activations and spatial kernels: (batch | c_out, channels | c_in, h, h).
using SpatialTensor = Tensor4<double>;
// Spectral activations and kernels: (d0, d1, n, n).
using ComplexTensor = Tensor4<Complex>;

inline std::string shape_str(const std::array<std::size_t, 4>& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) +
         "," + std::to_string(s[3]) + ")";
}

template <class T>
void require_square(const Tensor4<T>& t, const char* what) {
  detail::require<DimensionError>(t.dim(0) >= 1 && t.dim(1) >= 1 && t.dim(2) >= 1,
                                  std::string(what) + ": all dims must be >= 1, got " +
                                      shape_str(t.shape()));
  detail::require<DimensionError>(t.dim(2) == t.dim(3), std::string(what) +
                                                            ": maps must be square, got " +
                                                            shape_str(t.shape()));
}

// Squared Frobenius norm.
template <class T>
double frobenius_sq(const Tensor4<T>& t) {
  double s = 0.0;
  for (const auto& v : t.data()) s += std::norm(v);
  return s;
}

// ||a - b||_F / ||b||_F, or the absolute error when b is zero.
template <class T>
double relative_error(const Tensor4<T>& a, const Tensor4<T>& b) {
  detail::require<DimensionError>(a.shape() == b.shape(),
                                  "relative_error: shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a.data()[i] - b.data()[i]);
    den += std::norm(b.data()[i]);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace sparsespec
