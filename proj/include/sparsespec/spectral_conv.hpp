#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sparsespec/error.hpp"
#include "sparsespec/fft.hpp"
#include "sparsespec/tensor.hpp"

namespace sparsespec {

// Geometry of one convolution layer evaluated with n x n FFTs and
// overlap-and-add tiling.
//
// Convolution here is true convolution (kernel flipped relative to
// cross-correlation). Kernels trained as cross-correlation must be flipped
// before `to_spectral_kernels`.
struct ConvLayerSpec {
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t h_krn = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t n = 1;

  // m: spatial extent of an input tile.
  [[nodiscard]] std::size_t tile_step() const noexcept { return n + 1 - h_krn; }
  [[nodiscard]] std::size_t tiles_per_side(std::size_t h_act) const noexcept {
    const std::size_t m = tile_step();
    return (h_act + m - 1) / m;
  }
  [[nodiscard]] std::size_t output_size(std::size_t h_act) const noexcept {
    return (h_act + 2 * padding - h_krn) / stride + 1;
  }
  // Side of the full (padding h_krn-1) linear convolution, h_act + h_krn - 1.
  [[nodiscard]] std::size_t full_size(std::size_t h_act) const noexcept {
    return h_act + h_krn - 1;
  }

  void validate(std::size_t h_act) const {
    using detail::require;
    require<ConfigError>(c_in >= 1 && c_out >= 1 && h_krn >= 1, "layer: counts must be >= 1");
    require<ConfigError>(stride >= 1, "layer: stride must be >= 1");
    require<ConfigError>(padding + 1 <= h_krn, "layer: padding " + std::to_string(padding) +
                                                   " exceeds h_krn-1 = " +
                                                   std::to_string(h_krn - 1));
    require<SizeError>(is_pow2(n), "layer: FFT size must be a power of two, got " +
                                       std::to_string(n));
    require<SizeError>(h_krn <= n && n <= h_act + h_krn - 1,
                       "layer: FFT size " + std::to_string(n) + " outside [" +
                           std::to_string(h_krn) + ", " + std::to_string(h_act + h_krn - 1) + "]");
    require<SizeError>(h_act + 2 * padding >= h_krn, "layer: input smaller than kernel");
  }
};

// Zero-pads each h_krn x h_krn kernel to n x n (top-left aligned) and applies
// fft2 per (j, i) pair.
inline ComplexTensor to_spectral_kernels(const SpatialTensor& w, std::size_t n) {
  require_square(w, "to_spectral_kernels");
  const std::size_t h = w.dim(2);
  detail::require<SizeError>(h <= n, "to_spectral_kernels: kernel size " + std::to_string(h) +
                                         " exceeds FFT size " + std::to_string(n));
  detail::require<SizeError>(is_pow2(n), "to_spectral_kernels: FFT size must be a power of two");
  ComplexTensor out(w.dim(0), w.dim(1), n, n);
  for (std::size_t j = 0; j < w.dim(0); ++j)
    for (std::size_t i = 0; i < w.dim(1); ++i) {
      auto dst = out.map(j, i);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < h; ++x) dst[y * n + x] = w(j, i, y, x);
      fft2_inplace(dst, n);
    }
  return out;
}

// Direct sliding-window convolution, summed over input channels:
//   y[k,j,r,c] = sum_i sum_{dy,dx} xpad[k,i,r*S+dy,c*S+dx] * w[j,i,h-1-dy,h-1-dx]
inline SpatialTensor spatial_conv_oracle(const SpatialTensor& x, const SpatialTensor& w,
                                         std::size_t stride, std::size_t padding) {
  require_square(x, "spatial_conv_oracle input");
  require_square(w, "spatial_conv_oracle kernel");
  detail::require<DimensionError>(x.dim(1) == w.dim(1),
                                  "spatial_conv_oracle: channel mismatch " +
                                      shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  detail::require<ConfigError>(stride >= 1, "spatial_conv_oracle: stride must be >= 1");
  const std::size_t h = x.dim(2), hk = w.dim(2);
  detail::require<DimensionError>(h + 2 * padding >= hk, "spatial_conv_oracle: kernel too large");
  const std::size_t o = (h + 2 * padding - hk) / stride + 1;
  const auto ih = static_cast<std::ptrdiff_t>(h);

  SpatialTensor y(x.dim(0), w.dim(0), o, o);
  for (std::size_t k = 0; k < x.dim(0); ++k)
    for (std::size_t j = 0; j < w.dim(0); ++j)
      for (std::size_t r = 0; r < o; ++r)
        for (std::size_t c = 0; c < o; ++c) {
          double acc = 0.0;
          for (std::size_t i = 0; i < x.dim(1); ++i)
            for (std::size_t dy = 0; dy < hk; ++dy) {
              const auto sy = static_cast<std::ptrdiff_t>(r * stride + dy) -
                              static_cast<std::ptrdiff_t>(padding);
              if (sy < 0 || sy >= ih) continue;
              for (std::size_t dx = 0; dx < hk; ++dx) {
                const auto sx = static_cast<std::ptrdiff_t>(c * stride + dx) -
                                static_cast<std::ptrdiff_t>(padding);
                if (sx < 0 || sx >= ih) continue;
                acc += x(k, i, std::size_t(sy), std::size_t(sx)) *
                       w(j, i, hk - 1 - dy, hk - 1 - dx);
              }
            }
          y(k, j, r, c) = acc;
        }
  return y;
}

// ---------------------------------------------------------------------------
// Overlap-and-add pipeline. The three stages are exposed separately so the
// trainer and the accelerator simulator can reuse them.
//
// Spectral tiles are stored as a ComplexTensor of shape (b * T * T, c, n, n)
// with d0 = (k * T + t) * T + s for image k and tile row/column (t, s).
// ---------------------------------------------------------------------------

// Partition each input map into m x m tiles (zero-filled past the edge),
// pad each tile to n x n and transform it.
inline ComplexTensor spectral_tiles(const SpatialTensor& x, const ConvLayerSpec& layer) {
  require_square(x, "spectral_tiles");
  detail::require<DimensionError>(x.dim(1) == layer.c_in,
                                  "spectral_tiles: input has " + std::to_string(x.dim(1)) +
                                      " channels, layer expects " + std::to_string(layer.c_in));
  const std::size_t h = x.dim(2);
  layer.validate(h);
  const std::size_t n = layer.n, m = layer.tile_step(), T = layer.tiles_per_side(h);

  ComplexTensor out(x.dim(0) * T * T, x.dim(1), n, n);
  for (std::size_t k = 0; k < x.dim(0); ++k)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s < T; ++s)
        for (std::size_t i = 0; i < x.dim(1); ++i) {
          auto dst = out.map((k * T + t) * T + s, i);
          for (std::size_t y = 0; y < m && t * m + y < h; ++y)
            for (std::size_t xx = 0; xx < m && s * m + xx < h; ++xx)
              dst[y * n + xx] = x(k, i, t * m + y, s * m + xx);
          fft2_inplace(dst, n);
        }
  return out;
}

// Per tile: Y~[j] = sum_i X~[i] o W~[j,i], reduced over i in ascending order.
inline ComplexTensor hadamard_reduce(const ComplexTensor& x_tiles, const ComplexTensor& w_spec) {
  detail::require<DimensionError>(
      x_tiles.dim(1) == w_spec.dim(1) && x_tiles.dim(2) == w_spec.dim(2) &&
          x_tiles.dim(3) == w_spec.dim(3),
      "hadamard_reduce: tiles " + shape_str(x_tiles.shape()) + " vs kernels " +
          shape_str(w_spec.shape()));
  const std::size_t nn = x_tiles.map_size();
  ComplexTensor y(x_tiles.dim(0), w_spec.dim(0), x_tiles.dim(2), x_tiles.dim(3));
  for (std::size_t tile = 0; tile < x_tiles.dim(0); ++tile)
    for (std::size_t j = 0; j < w_spec.dim(0); ++j) {
      auto acc = y.map(tile, j);
      for (std::size_t i = 0; i < w_spec.dim(1); ++i) {
        const auto xm = x_tiles.map(tile, i);
        const auto wm = w_spec.map(j, i);
        for (std::size_t u = 0; u < nn; ++u) acc[u] += xm[u] * wm[u];
      }
    }
  return y;
}

// Inverse-transform each output tile, keep the real part, overlap-add the
// n x n tiles with stride m (h_krn - 1 overlapping pixels), then crop for
// padding < h_krn - 1 and slice for stride > 1 (crop first, then slice).
inline SpatialTensor assemble_output(const ComplexTensor& y_tiles, const ConvLayerSpec& layer,
                                     std::size_t h_act) {
  layer.validate(h_act);
  const std::size_t n = layer.n, m = layer.tile_step(), T = layer.tiles_per_side(h_act);
  detail::require<DimensionError>(y_tiles.dim(0) % (T * T) == 0 && y_tiles.dim(2) == n &&
                                      y_tiles.dim(1) == layer.c_out,
                                  "assemble_output: tile/step mismatch " +
                                      shape_str(y_tiles.shape()));
  const std::size_t b = y_tiles.dim(0) / (T * T);
  const std::size_t full = T * m + n - m;
  const std::size_t o = layer.output_size(h_act);
  const std::size_t offset = layer.h_krn - 1 - layer.padding;

  SpatialTensor out(b, layer.c_out, o, o);
  std::vector<double> acc(full * full);
  SpectralMap tmp(n * n);
  for (std::size_t k = 0; k < b; ++k)
    for (std::size_t j = 0; j < layer.c_out; ++j) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t s = 0; s < T; ++s) {
          const auto src = y_tiles.map((k * T + t) * T + s, j);
          std::copy(src.begin(), src.end(), tmp.begin());
          fft2_inplace(tmp, n, true);
          for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x)
              acc[(t * m + y) * full + s * m + x] += tmp[y * n + x].real();
        }
      for (std::size_t r = 0; r < o; ++r)
        for (std::size_t c = 0; c < o; ++c)
          out(k, j, r, c) = acc[(r * layer.stride + offset) * full + c * layer.stride + offset];
    }
  return out;
}

// Spectral convolution of real activations with spectral kernels (dense or
// pruned) via overlap-and-add.
inline SpatialTensor spectral_conv(const SpatialTensor& x, const ComplexTensor& w_spec,
                                   const ConvLayerSpec& layer) {
  detail::require<DimensionError>(w_spec.dim(0) == layer.c_out && w_spec.dim(1) == layer.c_in &&
                                      w_spec.dim(2) == layer.n && w_spec.dim(3) == layer.n,
                                  "spectral_conv: kernels " + shape_str(w_spec.shape()) +
                                      " do not match layer");
  return assemble_output(hadamard_reduce(spectral_tiles(x, layer), w_spec), layer, x.dim(2));
}

// ---------------------------------------------------------------------------
// Workload counters
// ---------------------------------------------------------------------------

// Real multiplications of direct convolution for one image.
inline std::uint64_t spatial_mac_count(const ConvLayerSpec& layer, std::size_t h_act) {
  const std::uint64_t o = layer.output_size(h_act);
  return o * o * layer.c_in * layer.c_out * layer.h_krn * layer.h_krn;
}

// Complex Hadamard multiplications for one image when each kernel map keeps
// `nonzeros` entries (n*n when unpruned).
inline std::uint64_t spectral_mac_count(const ConvLayerSpec& layer, std::size_t h_act,
                                        std::size_t nonzeros) {
  const std::uint64_t T = layer.tiles_per_side(h_act);
  return T * T * layer.c_in * layer.c_out * nonzeros;
}

}  // namespace sparsespec
