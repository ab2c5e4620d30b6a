#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sparsespec/error.hpp"
#include "sparsespec/tensor.hpp"

namespace sparsespec {

// Row-major n x n complex matrix.
using SpectralMap = std::vector<Complex>;

constexpr bool is_pow2(std::size_t n) noexcept { return n != 0 && std::has_single_bit(n); }

namespace detail {

struct FftPlan {
  std::size_t n = 0;
  std::vector<std::size_t> bitrev;
  std::vector<Complex> twiddle;  // exp(-2*pi*i*k/n), k < n/2
};

inline const FftPlan& fft_plan(std::size_t n) {
  thread_local std::unordered_map<std::size_t, FftPlan> plans;
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;

  FftPlan p;
  p.n = n;
  p.bitrev.resize(n);
  const int bits = std::countr_zero(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (int b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    p.bitrev[i] = r;
  }
  p.twiddle.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k)
    p.twiddle[k] = std::polar(1.0, -2.0 * std::numbers::pi * double(k) / double(n));
  return plans.emplace(n, std::move(p)).first->second;
}

// In-place radix-2 DIT FFT over `n` elements spaced `stride` apart. Unnormalized.
inline void fft1d(Complex* a, std::size_t stride, const FftPlan& p, bool inverse) {
  const std::size_t n = p.n;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = p.bitrev[i];
    if (i < j) std::swap(a[i * stride], a[j * stride]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2, step = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        Complex w = p.twiddle[k * step];
        if (inverse) w = std::conj(w);
        Complex& lo = a[(start + k) * stride];
        Complex& hi = a[(start + k + half) * stride];
        const Complex t = w * hi;
        hi = lo - t;
        lo += t;
      }
    }
  }
}

inline void check_fft_size(std::size_t n, std::size_t elems) {
  require<SizeError>(is_pow2(n), "FFT size must be a power of two, got " + std::to_string(n));
  require<SizeError>(elems == n * n, "FFT input must hold n*n = " + std::to_string(n * n) +
                                         " elements, got " + std::to_string(elems));
}

}  // namespace detail

// In-place 2D transform of a row-major n x n block: 1D FFT over rows, then
// over columns. The inverse applies the 1/n^2 normalization.
inline void fft2_inplace(std::span<Complex> a, std::size_t n, bool inverse = false) {
  detail::check_fft_size(n, a.size());
  const auto& plan = detail::fft_plan(n);
  for (std::size_t r = 0; r < n; ++r) detail::fft1d(a.data() + r * n, 1, plan, inverse);
  for (std::size_t c = 0; c < n; ++c) detail::fft1d(a.data() + c, n, plan, inverse);
  if (inverse) {
    const double scale = 1.0 / double(n * n);
    for (auto& v : a) v *= scale;
  }
}

inline SpectralMap fft2(std::span<const Complex> tile, std::size_t n) {
  SpectralMap out(tile.begin(), tile.end());
  fft2_inplace(out, n, false);
  return out;
}

inline SpectralMap fft2(std::span<const double> tile, std::size_t n) {
  SpectralMap out(tile.begin(), tile.end());
  fft2_inplace(out, n, false);
  return out;
}

inline SpectralMap ifft2(std::span<const Complex> spec, std::size_t n) {
  SpectralMap out(spec.begin(), spec.end());
  fft2_inplace(out, n, true);
  return out;
}

}  // namespace sparsespec
