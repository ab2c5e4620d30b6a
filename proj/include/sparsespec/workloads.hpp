#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sparsespec/error.hpp"
#include "sparsespec/sparse_format.hpp"

namespace sparsespec {

// Shape of one convolution layer for workload accounting.
struct ConvShape {
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t h_act = 1;
  std::size_t h_krn = 1;
};

// Convolution layers of a network evaluated with n x n FFTs at pruning rate
// alpha. Only Hadamard multiplications on stored kernel entries are counted.
struct WorkloadSpec {
  std::string name;
  std::vector<ConvShape> layers;
  std::size_t n = 8;
  double alpha = 1.0;

  [[nodiscard]] std::size_t nonzeros() const { return nonzeros_per_map(n, alpha); }

  [[nodiscard]] std::uint64_t tiles(const ConvShape& l) const {
    detail::require<SizeError>(l.h_krn <= n, "workload: kernel larger than FFT size in " + name);
    const std::uint64_t m = n + 1 - l.h_krn;
    const std::uint64_t t = (l.h_act + m - 1) / m;
    return t * t;
  }

  // sum over layers of tiles * c_in * c_out * floor(n^2 / alpha)
  [[nodiscard]] std::uint64_t macs_per_image() const {
    const std::uint64_t k = nonzeros();
    std::uint64_t total = 0;
    for (const auto& l : layers) total += tiles(l) * l.c_in * l.c_out * k;
    return total;
  }
};

// The 13 convolution layers of VGG16 on 224 x 224 inputs (3 x 3 kernels,
// same padding, 2 x 2 pooling between blocks).
inline WorkloadSpec vgg16_workload(std::size_t n, double alpha) {
  WorkloadSpec w{"vgg16", {}, n, alpha};
  const std::size_t blocks[5][3] = {
      {224, 64, 2}, {112, 128, 2}, {56, 256, 3}, {28, 512, 3}, {14, 512, 3}};
  std::size_t c = 3;
  for (const auto& b : blocks)
    for (std::size_t r = 0; r < b[2]; ++r) {
      w.layers.push_back({c, b[1], b[0], 3});
      c = b[1];
    }
  return w;
}

}  // namespace sparsespec
