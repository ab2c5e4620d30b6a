#include <catch_amalgamated.hpp>

#include "sparsespec/spectral_conv.hpp"
#include "sparsespec/workloads.hpp"
#include "test_util.hpp"

using namespace sparsespec;

namespace {

// Second, independently written convolution: scatter every input pixel times
// every kernel tap into the full (padding h-1) output, then pick the rows and
// columns that a padding-P, stride-S convolution keeps.
SpatialTensor scatter_conv(const SpatialTensor& x, const SpatialTensor& w, std::size_t stride,
                           std::size_t padding) {
  const std::size_t h = x.dim(2), hk = w.dim(2), full = h + hk - 1;
  const std::size_t o = (h + 2 * padding - hk) / stride + 1;
  SpatialTensor y(x.dim(0), w.dim(0), o, o);
  std::vector<double> f(full * full);
  for (std::size_t k = 0; k < x.dim(0); ++k)
    for (std::size_t j = 0; j < w.dim(0); ++j) {
      std::fill(f.begin(), f.end(), 0.0);
      for (std::size_t i = 0; i < x.dim(1); ++i)
        for (std::size_t py = 0; py < h; ++py)
          for (std::size_t px = 0; px < h; ++px)
            for (std::size_t qy = 0; qy < hk; ++qy)
              for (std::size_t qx = 0; qx < hk; ++qx)
                f[(py + qy) * full + px + qx] += x(k, i, py, px) * w(j, i, qy, qx);
      const std::size_t off = hk - 1 - padding;
      for (std::size_t r = 0; r < o; ++r)
        for (std::size_t c = 0; c < o; ++c)
          y(k, j, r, c) = f[(r * stride + off) * full + c * stride + off];
    }
  return y;
}

std::vector<std::size_t> valid_fft_sizes(std::size_t h_act, std::size_t h_krn) {
  std::vector<std::size_t> out;
  for (std::size_t n = 1; n <= h_act + h_krn - 1; n <<= 1)
    if (n >= h_krn) out.push_back(n);
  return out;
}

}  // namespace

TEST_CASE("delta kernel with same padding reproduces the input", "[conv]") {
  std::mt19937_64 rng(1);
  const auto x = testutil::random_spatial(rng, 2, 1, 9);
  SpatialTensor w(1, 1, 3, 3);
  w(0, 0, 1, 1) = 1.0;
  CHECK(relative_error(spatial_conv_oracle(x, w, 1, 1), x) == 0.0);

  const ConvLayerSpec layer{.c_in = 1, .c_out = 1, .h_krn = 3, .stride = 1, .padding = 1, .n = 8};
  CHECK(relative_error(spectral_conv(x, to_spectral_kernels(w, 8), layer), x) < 1e-12);
}

TEST_CASE("1x1 input with a 1x1 kernel of value 2 doubles the input", "[conv]") {
  SpatialTensor x(1, 1, 1, 1, 3.5);
  SpatialTensor w(1, 1, 1, 1, 2.0);
  CHECK(spatial_conv_oracle(x, w, 1, 0)(0, 0, 0, 0) == 7.0);
  const ConvLayerSpec layer{.c_in = 1, .c_out = 1, .h_krn = 1, .n = 1};
  CHECK(spectral_conv(x, to_spectral_kernels(w, 1), layer)(0, 0, 0, 0) ==
        Catch::Approx(7.0).epsilon(1e-14));
}

TEST_CASE("sliding-window oracle matches an independent scatter implementation", "[conv][oracle]") {
  std::mt19937_64 rng(2);
  const auto x = testutil::random_spatial(rng, 2, 3, 12);
  const auto w = testutil::random_spatial(rng, 4, 3, 3);
  for (std::size_t stride : {1u, 2u, 3u})
    for (std::size_t pad : {0u, 1u, 2u})
      CHECK(relative_error(spatial_conv_oracle(x, w, stride, pad), scatter_conv(x, w, stride, pad)) <
            1e-13);
}

TEST_CASE("spectral convolution equals spatial convolution for every valid n", "[conv][property]") {
  std::mt19937_64 rng(3);
  for (std::size_t h_krn : {1u, 3u, 5u}) {
    const std::size_t h_act = 11;
    const auto x = testutil::random_spatial(rng, 2, 3, h_act);
    const auto w = testutil::random_spatial(rng, 4, 3, h_krn);
    for (std::size_t n : valid_fft_sizes(h_act, h_krn))
      for (std::size_t stride : {1u, 2u})
        for (std::size_t pad : {std::size_t{0}, (h_krn - 1) / 2, h_krn - 1}) {
          const ConvLayerSpec layer{.c_in = 3, .c_out = 4, .h_krn = h_krn, .stride = stride,
                                    .padding = pad, .n = n};
          const auto spec = spectral_conv(x, to_spectral_kernels(w, n), layer);
          const auto ref = spatial_conv_oracle(x, w, stride, pad);
          INFO("h_krn=" << h_krn << " n=" << n << " stride=" << stride << " pad=" << pad);
          CHECK(relative_error(spec, ref) < 1e-6);
        }
  }
}

TEST_CASE("single-tile and multi-tile evaluations agree", "[conv][oaa]") {
  std::mt19937_64 rng(4);
  const std::size_t h_act = 13, h_krn = 4;  // 13 + 4 - 1 = 16 = single tile
  const auto x = testutil::random_spatial(rng, 1, 2, h_act);
  const auto w = testutil::random_spatial(rng, 3, 2, h_krn);
  const ConvLayerSpec single{.c_in = 2, .c_out = 3, .h_krn = h_krn, .padding = 3, .n = 16};
  REQUIRE(single.tiles_per_side(h_act) == 1);
  const auto y16 = spectral_conv(x, to_spectral_kernels(w, 16), single);
  for (std::size_t n : {4u, 8u}) {
    auto multi = single;
    multi.n = n;
    CHECK(multi.tiles_per_side(h_act) > 1);
    CHECK(relative_error(spectral_conv(x, to_spectral_kernels(w, n), multi), y16) < 1e-10);
  }
}

TEST_CASE("spectral convolution is linear in its input", "[conv][property]") {
  std::mt19937_64 rng(5);
  const auto x1 = testutil::random_spatial(rng, 1, 2, 10);
  const auto x2 = testutil::random_spatial(rng, 1, 2, 10);
  const auto w = testutil::random_complex(rng, 3, 2, 8);  // arbitrary spectral kernels
  const ConvLayerSpec layer{.c_in = 2, .c_out = 3, .h_krn = 3, .padding = 1, .n = 8};
  const double a = 0.7, b = -1.3;
  SpatialTensor mix(x1.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = a * x1.data()[i] + b * x2.data()[i];
  const auto y1 = spectral_conv(x1, w, layer), y2 = spectral_conv(x2, w, layer);
  SpatialTensor expect(y1.shape());
  for (std::size_t i = 0; i < expect.size(); ++i)
    expect.data()[i] = a * y1.data()[i] + b * y2.data()[i];
  CHECK(relative_error(spectral_conv(mix, w, layer), expect) < 1e-12);
}

TEST_CASE("to_spectral_kernels edge cases", "[conv]") {
  SpatialTensor zeros(2, 3, 3, 3);
  const auto zs = to_spectral_kernels(zeros, 8);
  for (const auto& v : zs.data()) CHECK(v == Complex{});

  SpatialTensor delta(2, 2, 3, 3);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t i = 0; i < 2; ++i) delta(j, i, 0, 0) = 1.0;
  const auto ds = to_spectral_kernels(delta, 8);
  for (const auto& v : ds.data()) CHECK(std::abs(v - 1.0) < 1e-15);

  std::mt19937_64 rng(6);
  const auto w = testutil::random_spatial(rng, 3, 2, 5);
  const auto ws = to_spectral_kernels(w, 8);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 0; i < 2; ++i) {
      const auto back = ifft2(ws.map(j, i), 8);
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
          const double expect = (y < 5 && x < 5) ? w(j, i, y, x) : 0.0;
          CHECK(std::abs(back[y * 8 + x] - expect) < 1e-10);
        }
    }

  CHECK_THROWS_AS(to_spectral_kernels(w, 4), SizeError);
}

TEST_CASE("invalid layer geometry is rejected", "[conv][error]") {
  std::mt19937_64 rng(7);
  const auto x = testutil::random_spatial(rng, 1, 2, 6);
  const auto w = testutil::random_complex(rng, 1, 2, 16);
  ConvLayerSpec layer{.c_in = 2, .c_out = 1, .h_krn = 3, .padding = 1, .n = 16};
  CHECK_THROWS_AS(spectral_conv(x, w, layer), SizeError);  // n > h_act + h_krn - 1
  layer.n = 2;
  CHECK_THROWS_AS(spectral_conv(x, testutil::random_complex(rng, 1, 2, 2), layer), SizeError);
  layer.n = 8;
  layer.padding = 3;
  CHECK_THROWS_AS(spectral_conv(x, testutil::random_complex(rng, 1, 2, 8), layer), ConfigError);
  layer.padding = 1;
  CHECK_THROWS_AS(spectral_conv(x, testutil::random_complex(rng, 1, 3, 8), layer), DimensionError);
  CHECK_THROWS_AS(spatial_conv_oracle(x, testutil::random_spatial(rng, 1, 3, 3), 1, 0),
                  DimensionError);
}

TEST_CASE("spectral convolution of VGG16 at n=8 needs at least 3x fewer multiplications",
          "[conv][workload]") {
  const auto vgg = vgg16_workload(8, 1.0);
  std::uint64_t spatial = 0, spectral = 0;
  for (const auto& l : vgg.layers) {
    const ConvLayerSpec layer{.c_in = l.c_in, .c_out = l.c_out, .h_krn = l.h_krn,
                              .padding = (l.h_krn - 1) / 2, .n = vgg.n};
    spatial += spatial_mac_count(layer, l.h_act);
    spectral += spectral_mac_count(layer, l.h_act, vgg.n * vgg.n);
  }
  const double ratio = double(spatial) / double(spectral);
  CHECK(ratio >= 3.0);
  CHECK(ratio <= 5.0);
}
