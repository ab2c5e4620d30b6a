#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sparsespec/error.hpp"
#include "sparsespec/serialize.hpp"

namespace sparsespec {

// Square grayscale images in [0, 1] with integer labels.
struct Dataset {
  std::size_t h = 0;
  std::vector<double> pixels;  // size() * h * h
  std::vector<int> labels;

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
  [[nodiscard]] std::span<const double> image(std::size_t i) const {
    return {pixels.data() + i * h * h, h * h};
  }

  [[nodiscard]] Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d{h, {}, {}};
    d.pixels.reserve(idx.size() * h * h);
    for (auto i : idx) {
      const auto im = image(i);
      d.pixels.insert(d.pixels.end(), im.begin(), im.end());
      d.labels.push_back(labels[i]);
    }
    return d;
  }

  // x -> (x - mean) / stddev for every pixel.
  void standardize(double mean, double stddev) {
    detail::require<ConfigError>(stddev > 0, "standardize: stddev must be positive");
    for (auto& v : pixels) v = (v - mean) / stddev;
  }

  [[nodiscard]] Dataset head(std::size_t count) const {
    std::vector<std::size_t> idx(std::min(count, size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return subset(idx);
  }
};

namespace detail {

inline std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  return std::uint32_t(b[at]) << 24 | std::uint32_t(b[at + 1]) << 16 |
         std::uint32_t(b[at + 2]) << 8 | std::uint32_t(b[at + 3]);
}

}  // namespace detail

// IDX files: big-endian magic 0x00000803 (u8 images) / 0x00000801 (u8 labels).
inline Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  using detail::require;
  const auto ib = detail::read_file(images);
  const auto lb = detail::read_file(labels);
  require<FormatError>(ib.size() >= 16 && detail::be32(ib, 0) == 0x803,
                       images.string() + ": not an IDX u8 image file");
  require<FormatError>(lb.size() >= 8 && detail::be32(lb, 0) == 0x801,
                       labels.string() + ": not an IDX u8 label file");
  const std::size_t count = detail::be32(ib, 4), rows = detail::be32(ib, 8),
                    cols = detail::be32(ib, 12);
  require<FormatError>(rows == cols && rows > 0, images.string() + ": images must be square");
  require<FormatError>(ib.size() == 16 + count * rows * cols,
                       images.string() + ": size does not match header");
  require<FormatError>(detail::be32(lb, 4) == count && lb.size() == 8 + count,
                       labels.string() + ": label count does not match images");

  Dataset d{rows, std::vector<double>(count * rows * cols), std::vector<int>(count)};
  for (std::size_t p = 0; p < d.pixels.size(); ++p) d.pixels[p] = ib[16 + p] / 255.0;
  for (std::size_t i = 0; i < count; ++i) {
    d.labels[i] = lb[8 + i];
    require<FormatError>(d.labels[i] < 10, labels.string() + ": label out of range at " +
                                               std::to_string(i));
  }
  return d;
}

inline constexpr double kMnistMean = 0.1307;
inline constexpr double kMnistStd = 0.3081;

// Loads <dir>/{train,t10k}-{images-idx3,labels-idx1}-ubyte.
inline std::pair<Dataset, Dataset> load_mnist(const std::filesystem::path& dir) {
  return {load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte"),
          load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte")};
}

// Ten fixed random h x h prototypes plus per-sample noise. Linearly
// separable at the default noise level; meant for fast tests.
inline Dataset synthetic_dataset(std::size_t count, std::size_t h, std::uint64_t seed,
                                 double noise = 0.15) {
  std::mt19937_64 proto_rng(0x5eed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> protos(10 * h * h);
  for (auto& v : protos) v = u(proto_rng) < 0.3 ? 1.0 : 0.0;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, noise);
  Dataset d{h, std::vector<double>(count * h * h), std::vector<int>(count)};
  for (std::size_t i = 0; i < count; ++i) {
    const int c = int(i % 10);
    d.labels[i] = c;
    for (std::size_t p = 0; p < h * h; ++p)
      d.pixels[i * h * h + p] = std::clamp(protos[c * h * h + p] + g(rng), 0.0, 1.0);
  }
  return d;
}

}  // namespace sparsespec
