#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <random>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "sparsespec/error.hpp"
#include "sparsespec/fft.hpp"
#include "sparsespec/mnist.hpp"
#include "sparsespec/spectral_conv.hpp"
#include "sparsespec/tensor.hpp"

namespace sparsespec::admm {

namespace detail {
using sparsespec::detail::require;
}  // namespace detail

// spectral-conv(1 -> c1) -> ReLU -> 2x2 max-pool -> spectral-conv(c1 -> c2)
// -> ReLU -> 2x2 max-pool -> dense(-> classes) -> softmax cross-entropy.
// Both convolutions use same padding and overlap-and-add with n x n FFTs.
struct ToyModelSpec {
  std::size_t input = 28;
  std::size_t c1 = 8;
  std::size_t c2 = 16;
  std::size_t h_krn = 5;
  std::size_t n = 8;
  std::size_t classes = 10;

  [[nodiscard]] ConvLayerSpec conv1() const {
    return {.c_in = 1, .c_out = c1, .h_krn = h_krn, .stride = 1, .padding = (h_krn - 1) / 2,
            .n = n};
  }
  [[nodiscard]] ConvLayerSpec conv2() const {
    return {.c_in = c1, .c_out = c2, .h_krn = h_krn, .stride = 1, .padding = (h_krn - 1) / 2,
            .n = n};
  }
  [[nodiscard]] std::size_t pooled() const noexcept { return input / 4; }
  [[nodiscard]] std::size_t features() const noexcept { return c2 * pooled() * pooled(); }

  void validate() const {
    detail::require<ConfigError>(input % 4 == 0 && input >= 4,
                                 "toy model: input size must be a positive multiple of 4");
    detail::require<ConfigError>(h_krn % 2 == 1, "toy model: kernel size must be odd");
    conv1().validate(input);
    conv2().validate(input / 2);
  }
};

// Parameters, and gradients in the same layout. For spectral kernels a
// gradient entry holds dL/dRe in its real part and dL/dIm in its imaginary
// part.
struct ToyParams {
  ComplexTensor w1, w2;
  std::vector<double> b1, b2;
  std::vector<double> dense_w;  // classes x features
  std::vector<double> dense_b;

  static ToyParams zeros(const ToyModelSpec& s) {
    return {ComplexTensor(s.c1, 1, s.n, s.n),
            ComplexTensor(s.c2, s.c1, s.n, s.n),
            std::vector<double>(s.c1),
            std::vector<double>(s.c2),
            std::vector<double>(s.classes * s.features()),
            std::vector<double>(s.classes)};
  }

  [[nodiscard]] std::array<ComplexTensor*, 2> spectral() { return {&w1, &w2}; }
  [[nodiscard]] std::array<const ComplexTensor*, 2> spectral() const { return {&w1, &w2}; }

  // Visits every real scalar: f(double& value, ParamClass).
  enum class Class { spectral_real, spectral_imag, dense };
  template <class F>
  void for_each(F&& f) {
    for (auto* w : spectral())
      for (auto& v : w->data()) {
        double re = v.real(), im = v.imag();
        f(re, Class::spectral_real);
        f(im, Class::spectral_imag);
        v = {re, im};
      }
    for (auto* vec : {&b1, &b2, &dense_w, &dense_b})
      for (auto& v : *vec) f(v, Class::dense);
  }

  // this += a * g; spectral entries scaled by `spectral_scale` in addition.
  void axpy(double a, const ToyParams& g, double spectral_scale = 1.0) {
    for (std::size_t l = 0; l < 2; ++l) {
      auto& w = *spectral()[l];
      const auto& gw = *g.spectral()[l];
      for (std::size_t u = 0; u < w.size(); ++u) w.data()[u] += a * spectral_scale * gw.data()[u];
    }
    auto add = [a](std::vector<double>& x, const std::vector<double>& y) {
      for (std::size_t u = 0; u < x.size(); ++u) x[u] += a * y[u];
    };
    add(b1, g.b1);
    add(b2, g.b2);
    add(dense_w, g.dense_w);
    add(dense_b, g.dense_b);
  }

  [[nodiscard]] bool finite() const {
    bool ok = true;
    const_cast<ToyParams*>(this)->for_each([&](double& v, Class) { ok = ok && std::isfinite(v); });
    return ok;
  }
};

using Gradients = ToyParams;

// He-normal h_krn x h_krn spatial kernels for both convolutions.
inline std::pair<SpatialTensor, SpatialTensor> init_spatial_kernels(const ToyModelSpec& s,
                                                                    std::mt19937_64& rng) {
  auto he = [&](std::size_t c_out, std::size_t c_in) {
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / double(c_in * s.h_krn * s.h_krn)));
    SpatialTensor w(c_out, c_in, s.h_krn, s.h_krn);
    for (auto& v : w.data()) v = g(rng);
    return w;
  };
  auto w1 = he(s.c1, 1);
  auto w2 = he(s.c2, s.c1);
  return {std::move(w1), std::move(w2)};
}

// Spectral kernels are the FFT of He-initialized spatial kernels; the dense
// layer is normal with variance 1 / features; biases start at zero.
inline ToyParams init_params(const ToyModelSpec& s, std::mt19937_64& rng) {
  s.validate();
  auto p = ToyParams::zeros(s);
  const auto [w1, w2] = init_spatial_kernels(s, rng);
  p.w1 = to_spectral_kernels(w1, s.n);
  p.w2 = to_spectral_kernels(w2, s.n);
  std::normal_distribution<double> g(0.0, std::sqrt(1.0 / double(s.features())));
  for (auto& v : p.dense_w) v = g(rng);
  return p;
}

// ---------------------------------------------------------------------------
// Per-example forward / backward
// ---------------------------------------------------------------------------

struct ConvCache {
  ComplexTensor x_tiles;  // (T*T, c_in, n, n)
  SpatialTensor pre;      // (1, c_out, h, h) after bias, before ReLU
};

struct PoolCache {
  SpatialTensor out;                // (1, c, h/2, h/2)
  std::vector<std::uint32_t> from;  // flat index into `pre` of each max
};

struct ForwardCache {
  ConvCache conv1, conv2;
  PoolCache pool1, pool2;
  std::vector<double> probs;
  int label = 0;
  double loss = 0.0;
};

namespace detail {

inline SpatialTensor conv_forward(const SpatialTensor& x, const ComplexTensor& w,
                                  std::span<const double> bias, const ConvLayerSpec& layer,
                                  ConvCache& cache) {
  cache.x_tiles = spectral_tiles(x, layer);
  auto y = assemble_output(hadamard_reduce(cache.x_tiles, w), layer, x.dim(2));
  for (std::size_t j = 0; j < layer.c_out; ++j)
    for (auto& v : y.map(0, j)) v += bias[j];
  cache.pre = y;
  return y;
}

// ReLU followed by 2x2 max-pooling (the two commute).
inline void relu_pool(const SpatialTensor& pre, PoolCache& cache) {
  const std::size_t c = pre.dim(1), h = pre.dim(2), o = h / 2;
  cache.out = SpatialTensor(1, c, o, o);
  cache.from.assign(c * o * o, 0);
  for (std::size_t j = 0; j < c; ++j)
    for (std::size_t r = 0; r < o; ++r)
      for (std::size_t q = 0; q < o; ++q) {
        std::size_t best = (j * h + 2 * r) * h + 2 * q;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t at = (j * h + 2 * r + dy) * h + 2 * q + dx;
            if (pre.data()[at] > pre.data()[best]) best = at;
          }
        cache.from[(j * o + r) * o + q] = std::uint32_t(best);
        cache.out(0, j, r, q) = std::max(pre.data()[best], 0.0);
      }
}

inline SpatialTensor relu_pool_backward(const SpatialTensor& g_out, const PoolCache& cache,
                                        const SpatialTensor& pre) {
  SpatialTensor g(pre.shape());
  for (std::size_t u = 0; u < cache.from.size(); ++u)
    if (pre.data()[cache.from[u]] > 0.0) g.data()[cache.from[u]] += g_out.data()[u];
  return g;
}

// Reverse pass of one spectral convolution. With G = fft2(dL/dy_tile) / n^2:
//   dL/dW~[j,i] += sum_tiles conj(X~[i]) o G[j]
//   dL/dx_tile[i] = Re(n^2 ifft2(sum_j conj(W~[j,i]) o G[j]))
inline void conv_backward(const SpatialTensor& g_pre, const ConvCache& cache,
                          const ComplexTensor& w, const ConvLayerSpec& layer, std::size_t h_act,
                          ComplexTensor& g_w, std::span<double> g_b, SpatialTensor* g_x) {
  const std::size_t n = layer.n, nn = n * n, m = layer.tile_step(), T = layer.tiles_per_side(h_act);
  const std::size_t full = T * m + n - m, o = layer.output_size(h_act);
  const std::size_t off = layer.h_krn - 1 - layer.padding;
  const double inv = 1.0 / double(nn);

  ComplexTensor G(T * T, layer.c_out, n, n);
  std::vector<double> acc(full * full);
  for (std::size_t j = 0; j < layer.c_out; ++j) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t r = 0; r < o; ++r)
      for (std::size_t c = 0; c < o; ++c) {
        const double g = g_pre(0, j, r, c);
        g_b[j] += g;
        acc[(r * layer.stride + off) * full + c * layer.stride + off] += g;
      }
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s < T; ++s) {
        auto dst = G.map(t * T + s, j);
        for (std::size_t y = 0; y < n; ++y)
          for (std::size_t x = 0; x < n; ++x) dst[y * n + x] = acc[(t * m + y) * full + s * m + x];
        fft2_inplace(dst, n);
        for (auto& v : dst) v *= inv;
      }
  }

  for (std::size_t tile = 0; tile < T * T; ++tile)
    for (std::size_t j = 0; j < layer.c_out; ++j) {
      const auto gm = G.map(tile, j);
      for (std::size_t i = 0; i < layer.c_in; ++i) {
        const auto xm = cache.x_tiles.map(tile, i);
        auto dw = g_w.map(j, i);
        for (std::size_t u = 0; u < nn; ++u) dw[u] += std::conj(xm[u]) * gm[u];
      }
    }

  if (!g_x) return;
  *g_x = SpatialTensor(1, layer.c_in, h_act, h_act);
  SpectralMap gx(nn);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t s = 0; s < T; ++s)
      for (std::size_t i = 0; i < layer.c_in; ++i) {
        std::fill(gx.begin(), gx.end(), Complex{});
        for (std::size_t j = 0; j < layer.c_out; ++j) {
          const auto gm = G.map(t * T + s, j);
          const auto wm = w.map(j, i);
          for (std::size_t u = 0; u < nn; ++u) gx[u] += std::conj(wm[u]) * gm[u];
        }
        fft2_inplace(gx, n, true);
        for (std::size_t y = 0; y < m && t * m + y < h_act; ++y)
          for (std::size_t x = 0; x < m && s * m + x < h_act; ++x)
            (*g_x)(0, i, t * m + y, s * m + x) += double(nn) * gx[y * n + x].real();
      }
}

}  // namespace detail

// Loss of one example; fills `cache` for backward().
inline double forward_example(const ToyModelSpec& s, const ToyParams& p,
                              std::span<const double> image, int label, ForwardCache& cache) {
  using detail::require;
  require<DimensionError>(image.size() == s.input * s.input,
                          "forward: image has " + std::to_string(image.size()) +
                              " pixels, model expects " + std::to_string(s.input * s.input));
  require<DimensionError>(label >= 0 && std::size_t(label) < s.classes,
                          "forward: label out of range");
  SpatialTensor x(1, 1, s.input, s.input);
  std::copy(image.begin(), image.end(), x.data().begin());

  detail::relu_pool(detail::conv_forward(x, p.w1, p.b1, s.conv1(), cache.conv1), cache.pool1);
  detail::relu_pool(detail::conv_forward(cache.pool1.out, p.w2, p.b2, s.conv2(), cache.conv2),
                    cache.pool2);

  const auto& f = cache.pool2.out.data();
  const std::size_t D = s.features();
  std::vector<double> logits(s.classes);
  for (std::size_t c = 0; c < s.classes; ++c) {
    double z = p.dense_b[c];
    for (std::size_t d = 0; d < D; ++d) z += p.dense_w[c * D + d] * f[d];
    logits[c] = z;
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  cache.probs.resize(s.classes);
  for (std::size_t c = 0; c < s.classes; ++c) sum += cache.probs[c] = std::exp(logits[c] - zmax);
  for (auto& q : cache.probs) q /= sum;
  cache.label = label;
  cache.loss = std::log(sum) + zmax - logits[std::size_t(label)];
  return cache.loss;
}

// Accumulates scale * dL/dtheta of one cached example into g.
inline void backward_example(const ToyModelSpec& s, const ToyParams& p, const ForwardCache& cache,
                             double scale, Gradients& g) {
  detail::require<Error>(!cache.probs.empty(), "backward: missing forward cache");
  const std::size_t D = s.features();
  const auto& f = cache.pool2.out.data();

  SpatialTensor g_feat(cache.pool2.out.shape());
  for (std::size_t c = 0; c < s.classes; ++c) {
    const double dz = scale * (cache.probs[c] - (int(c) == cache.label ? 1.0 : 0.0));
    g.dense_b[c] += dz;
    for (std::size_t d = 0; d < D; ++d) {
      g.dense_w[c * D + d] += dz * f[d];
      g_feat.data()[d] += dz * p.dense_w[c * D + d];
    }
  }

  const auto g_pre2 = detail::relu_pool_backward(g_feat, cache.pool2, cache.conv2.pre);
  SpatialTensor g_pool1;
  detail::conv_backward(g_pre2, cache.conv2, p.w2, s.conv2(), s.input / 2, g.w2, g.b2, &g_pool1);
  const auto g_pre1 = detail::relu_pool_backward(g_pool1, cache.pool1, cache.conv1.pre);
  detail::conv_backward(g_pre1, cache.conv1, p.w1, s.conv1(), s.input, g.w1, g.b1, nullptr);
}

inline int predict(const ForwardCache& cache) {
  return int(std::max_element(cache.probs.begin(), cache.probs.end()) - cache.probs.begin());
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

struct BatchCache {
  std::vector<ForwardCache> examples;
};

namespace detail {

// Runs f(i) for i in [0, count) on up to `threads` workers, example i on
// worker i % threads.
template <class F>
void parallel_examples(std::size_t count, unsigned threads, F&& f) {
  threads = std::max(1u, std::min<unsigned>(threads, unsigned(count)));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// Mean softmax cross-entropy over the batch.
inline double forward_loss(const ToyModelSpec& s, const ToyParams& p, const Dataset& batch,
                           BatchCache& cache, unsigned threads = 1) {
  detail::require<DimensionError>(batch.h == s.input, "forward: batch images are " +
                                                          std::to_string(batch.h) + " px, model " +
                                                          std::to_string(s.input));
  detail::require<DimensionError>(batch.size() > 0, "forward: empty batch");
  cache.examples.assign(batch.size(), {});
  detail::parallel_examples(batch.size(), threads, [&](std::size_t i) {
    forward_example(s, p, batch.image(i), batch.labels[i], cache.examples[i]);
  });
  double loss = 0.0;
  for (const auto& e : cache.examples) loss += e.loss;
  return loss / double(batch.size());
}

// Gradient of the mean loss. Per-example gradients are reduced in example
// order, so the result does not depend on the thread count.
inline Gradients backward(const ToyModelSpec& s, const ToyParams& p, const BatchCache& cache,
                          unsigned threads = 1, double loss_scale = 1.0) {
  detail::require<Error>(!cache.examples.empty(), "backward: missing forward cache");
  const double scale = loss_scale / double(cache.examples.size());
  auto g = Gradients::zeros(s);
  if (threads <= 1) {
    auto one = Gradients::zeros(s);
    for (const auto& e : cache.examples) {
      one = Gradients::zeros(s);
      backward_example(s, p, e, scale, one);
      g.axpy(1.0, one);
    }
    return g;
  }
  std::vector<Gradients> per(cache.examples.size(), Gradients::zeros(s));
  detail::parallel_examples(cache.examples.size(), threads, [&](std::size_t i) {
    backward_example(s, p, cache.examples[i], scale, per[i]);
  });
  for (const auto& pe : per) g.axpy(1.0, pe);
  return g;
}

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Evaluated in chunks to bound the size of the activation caches.
inline Evaluation evaluate(const ToyModelSpec& s, const ToyParams& p, const Dataset& data,
                           unsigned threads = 1, std::size_t chunk = 100) {
  detail::require<DimensionError>(data.size() > 0, "evaluate: empty dataset");
  BatchCache cache;
  Evaluation ev;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + chunk, data.size()); ++i) idx.push_back(i);
    ev.loss += forward_loss(s, p, data.subset(idx), cache, threads) * double(idx.size());
    for (const auto& e : cache.examples) correct += predict(e) == e.label;
  }
  ev.loss /= double(data.size());
  ev.accuracy = double(correct) / double(data.size());
  return ev;
}

}  // namespace sparsespec::admm
