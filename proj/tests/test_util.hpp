#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "sparsespec/tensor.hpp"

namespace testutil {

using sparsespec::Complex;

inline sparsespec::SpatialTensor random_spatial(std::mt19937_64& rng, std::size_t d0,
                                                std::size_t d1, std::size_t h) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  sparsespec::SpatialTensor t(d0, d1, h, h);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline sparsespec::ComplexTensor random_complex(std::mt19937_64& rng, std::size_t d0,
                                                std::size_t d1, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  sparsespec::ComplexTensor t(d0, d1, n, n);
  for (auto& v : t.data()) v = {g(rng), g(rng)};
  return t;
}

inline std::vector<Complex> random_map(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Complex> m(n * n);
  for (auto& v : m) v = {g(rng), g(rng)};
  return m;
}

// O(n^4) 2D DFT straight from the definition. sign = -1 forward, +1 inverse
// (inverse includes the 1/n^2 factor).
inline std::vector<Complex> naive_dft2(const std::vector<Complex>& a, std::size_t n, int sign) {
  std::vector<Complex> out(n * n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) {
      Complex acc{0.0, 0.0};
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
          const double ang = sign * 2.0 * std::numbers::pi * double(u * y + v * x) / double(n);
          acc += a[y * n + x] * Complex(std::cos(ang), std::sin(ang));
        }
      out[u * n + v] = sign > 0 ? acc / double(n * n) : acc;
    }
  return out;
}

inline double rel_err(const std::vector<Complex>& a, const std::vector<Complex>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace testutil
