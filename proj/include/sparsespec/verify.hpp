#pragma once

// Oracle-equivalence checks run by the `verify` command. Each check draws
// random cases from a seed, compares a library path against an independent
// reference and reports the worst error seen.

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "sparsespec/accel_sim.hpp"
#include "sparsespec/admm/model.hpp"
#include "sparsespec/mnist.hpp"
#include "sparsespec/serialize.hpp"
#include "sparsespec/sparse_format.hpp"
#include "sparsespec/spectral_conv.hpp"

namespace sparsespec::verify {

struct CheckResult {
  std::string name;
  std::size_t cases = 0;
  double worst = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;  // first failing case, or the error that stopped the check
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  std::optional<double> tolerance;  // overrides every per-check default
  std::size_t conv_cases = 50;
  std::size_t sim_cases = 100;
  std::size_t gradient_seeds = 3;
  unsigned threads = 1;

  [[nodiscard]] double tol(double fallback) const { return tolerance.value_or(fallback); }
};

namespace detail {

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline SpatialTensor uniform_spatial(std::mt19937_64& rng, std::size_t d0, std::size_t d1,
                                     std::size_t h) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SpatialTensor t(d0, d1, h, h);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline ComplexTensor normal_complex(std::mt19937_64& rng, std::size_t d0, std::size_t d1,
                                    std::size_t n) {
  std::normal_distribution<double> g;
  ComplexTensor t(d0, d1, n, n);
  for (auto& v : t.data()) v = {g(rng), g(rng)};
  return t;
}

inline void note(CheckResult& r, double err, const std::string& where) {
  r.worst = std::max(r.worst, err);
  if (!(err <= r.tolerance) && r.detail.empty()) r.detail = where;
}

inline CheckResult finish(CheckResult r) {
  r.pass = r.detail.empty();
  return r;
}

}  // namespace detail

// Spectral overlap-and-add convolution against the sliding-window oracle on
// random (layer, n, stride, padding) configurations with h_act <= 32, c <= 8.
inline CheckResult check_convolution(const VerifyOptions& opt) {
  CheckResult r{"spectral vs spatial convolution", 0, 0.0, opt.tol(1e-6), false, {}};
  std::mt19937_64 rng(opt.seed);
  while (r.cases < opt.conv_cases) {
    const std::size_t h_krn = detail::pick(rng, 1, 7), h_act = detail::pick(rng, h_krn, 32);
    std::vector<std::size_t> sizes;
    for (std::size_t n = 1; n <= std::min<std::size_t>(h_act + h_krn - 1, 32); n <<= 1)
      if (n >= h_krn) sizes.push_back(n);
    if (sizes.empty()) continue;
    const ConvLayerSpec layer{.c_in = detail::pick(rng, 1, 8), .c_out = detail::pick(rng, 1, 8),
                              .h_krn = h_krn, .stride = detail::pick(rng, 1, 3),
                              .padding = detail::pick(rng, 0, h_krn - 1),
                              .n = sizes[detail::pick(rng, 0, sizes.size() - 1)]};
    const auto x = detail::uniform_spatial(rng, detail::pick(rng, 1, 2), layer.c_in, h_act);
    const auto w = detail::uniform_spatial(rng, layer.c_out, layer.c_in, h_krn);
    const double err = relative_error(spectral_conv(x, to_spectral_kernels(w, layer.n), layer),
                                      spatial_conv_oracle(x, w, layer.stride, layer.padding));
    detail::note(r, err, "h_act=" + std::to_string(h_act) + " h_krn=" + std::to_string(h_krn) +
                             " n=" + std::to_string(layer.n) + " stride=" +
                             std::to_string(layer.stride) + " pad=" +
                             std::to_string(layer.padding));
    ++r.cases;
  }
  return detail::finish(r);
}

// Simulator outputs against the dense masked Hadamard reference, and cycle
// counts against the analytic schedule length.
inline CheckResult check_simulator(const VerifyOptions& opt) {
  CheckResult r{"simulator vs dense reference", 0, 0.0, opt.tol(1e-9), false, {}};
  std::mt19937_64 rng(opt.seed + 1);
  for (; r.cases < opt.sim_cases; ++r.cases) {
    const double alpha = std::array{2.0, 4.0, 8.0}[detail::pick(rng, 0, 2)];
    const std::size_t P_o = std::array<std::size_t, 3>{4, 8, 16}[detail::pick(rng, 0, 2)];
    const std::size_t R = detail::pick(rng, 1, P_o), n = 8;
    const std::size_t c_out = detail::pick(rng, 1, 2 * P_o), c_in = detail::pick(rng, 1, 3);
    const SimConfig cfg{.P_b = detail::pick(rng, 1, 3), .P_o = P_o, .R = R,
                        .c = std::max(c_out, c_in), .n = n, .b = detail::pick(rng, 1, 4)};
    const auto set = SparseSpectralKernelSet::from_dense(
        detail::normal_complex(rng, c_out, c_in, n), nonzeros_per_map(n, alpha));
    const auto act = detail::normal_complex(rng, cfg.b, c_in, n);
    const auto rep = simulate_tile(schedule_kernel_tile(set, P_o, R), act, cfg);
    const std::string where = "case " + std::to_string(r.cases) + " (alpha=" +
                              std::to_string(int(alpha)) + ", P_o=" + std::to_string(P_o) +
                              ", R=" + std::to_string(R) + ")";
    detail::note(r, relative_error(rep.outputs, dense_hadamard_reference(set, act)), where);
    const std::uint64_t passes = (cfg.b + cfg.P_b - 1) / cfg.P_b;
    if (rep.cycles != lambda_stats(set, P_o, R).total_rows * passes && r.detail.empty())
      r.detail = where + ": cycle count differs from the analytic schedule";
  }
  return detail::finish(r);
}

// Top-k projection against a full sort, and against exhaustive mask
// enumeration on 2 x 2 maps.
inline CheckResult check_projection(const VerifyOptions& opt) {
  CheckResult r{"projection vs sort oracle", 0, 0.0, opt.tol(1e-12), false, {}};
  std::mt19937_64 rng(opt.seed + 2);
  std::normal_distribution<double> g;
  for (std::size_t t = 0; t < 200; ++t, ++r.cases) {
    const std::size_t n = std::size_t{1} << detail::pick(rng, 1, 4);
    const std::size_t k = detail::pick(rng, 1, n * n);
    std::vector<Complex> m(n * n);
    for (auto& v : m) v = {g(rng), g(rng)};
    std::vector<std::size_t> order(m.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return std::abs(m[a]) > std::abs(m[b]); });
    std::vector<Complex> want(m.size());
    for (std::size_t e = 0; e < k; ++e) want[order[e]] = m[order[e]];
    const auto got = project_topk(m, k);
    double err = 0.0;
    for (std::size_t u = 0; u < m.size(); ++u) err = std::max(err, std::abs(got[u] - want[u]));
    detail::note(r, err, "sort case " + std::to_string(t));
  }
  for (std::size_t t = 0; t < 20; ++t)
    for (std::size_t k = 1; k <= 3; ++k, ++r.cases) {
      std::vector<Complex> m(4);
      for (auto& v : m) v = {g(rng), g(rng)};
      double best = INFINITY;
      for (unsigned mask = 0; mask < 16; ++mask) {
        if (std::popcount(mask) != int(k)) continue;
        double res = 0.0;
        for (unsigned u = 0; u < 4; ++u)
          if (!(mask >> u & 1)) res += std::norm(m[u]);
        best = std::min(best, res);
      }
      const auto got = project_topk(m, k);
      double res = 0.0;
      for (std::size_t u = 0; u < 4; ++u) res += std::norm(m[u] - got[u]);
      detail::note(r, std::abs(res - best), "exhaustive case " + std::to_string(t) + " k=" +
                                               std::to_string(k));
    }
  return detail::finish(r);
}

// Backpropagated gradients of the toy model against central finite
// differences, as a relative norm per parameter class.
inline CheckResult check_gradients(const VerifyOptions& opt) {
  using namespace admm;
  CheckResult r{"gradients vs finite differences", 0, 0.0, opt.tol(1e-4), false, {}};
  const ToyModelSpec s{.input = 8, .c1 = 3, .c2 = 4, .h_krn = 5, .n = 8};
  const double h = 1e-4;
  for (std::size_t seed = 0; seed < opt.gradient_seeds; ++seed, ++r.cases) {
    std::mt19937_64 rng(opt.seed + 10 + seed);
    auto p = ToyParams::zeros(s);
    p.w1 = detail::normal_complex(rng, s.c1, 1, s.n);
    p.w2 = detail::normal_complex(rng, s.c2, s.c1, s.n);
    for (auto& v : p.w1.data()) v *= 0.2;
    for (auto& v : p.w2.data()) v *= 0.1;
    std::normal_distribution<double> g(0.0, 0.3);
    for (auto* v : {&p.dense_w, &p.dense_b}) for (auto& x : *v) x = g(rng);
    for (auto* v : {&p.b1, &p.b2}) for (auto& x : *v) x = 0.3 + 0.1 * g(rng);
    const auto data = synthetic_dataset(4, s.input, opt.seed + seed);

    auto loss = [&](const ToyParams& q) {
      BatchCache c;
      return forward_loss(s, q, data, c, opt.threads);
    };
    BatchCache cache;
    forward_loss(s, p, data, cache, opt.threads);
    auto grad = backward(s, p, cache, opt.threads);
    std::vector<double> analytic;
    grad.for_each([&](double& v, ToyParams::Class) { analytic.push_back(v); });

    // for_each hands out copies of spectral scalars, so each probe sets one
    // scalar by position on a fresh copy.
    auto shifted = [&](std::size_t at, double delta) {
      auto q = p;
      std::size_t idx = 0;
      q.for_each([&](double& v, ToyParams::Class) {
        if (idx++ == at) v += delta;
      });
      return loss(q);
    };
    std::vector<ToyParams::Class> classes;
    p.for_each([&](double&, ToyParams::Class c) { classes.push_back(c); });
    double num[3] = {0, 0, 0}, den[3] = {0, 0, 0};
    for (std::size_t q = 0; q < analytic.size(); ++q) {
      const double fd = (shifted(q, h) - shifted(q, -h)) / (2 * h);
      const auto c = std::size_t(classes[q]);
      num[c] += (fd - analytic[q]) * (fd - analytic[q]);
      den[c] += fd * fd;
    }
    static constexpr const char* names[3] = {"spectral real", "spectral imag", "dense"};
    for (std::size_t c = 0; c < 3; ++c) {
      const double err = den[c] > 0 ? std::sqrt(num[c] / den[c]) : INFINITY;
      detail::note(r, err, "seed " + std::to_string(seed) + " class " + names[c]);
    }
  }
  return detail::finish(r);
}

// Loads an SPK1 file and replays every layer through the simulator against
// the dense reference. Format errors name the byte offset or map at fault.
inline CheckResult check_kernel_file(const std::filesystem::path& path, const VerifyOptions& opt) {
  CheckResult r{"kernel file " + path.filename().string(), 0, 0.0, opt.tol(1e-9), false, {}};
  std::vector<SparseSpectralKernelSet> layers;
  try {
    layers = load_kernels(path);
  } catch (const FormatError& e) {
    r.detail = e.what();
    r.worst = INFINITY;
    return r;
  }
  std::mt19937_64 rng(opt.seed + 3);
  for (std::size_t l = 0; l < layers.size(); ++l, ++r.cases) {
    const auto& set = layers[l];
    const std::size_t P_o = std::min<std::size_t>(set.c_out, 16), R = std::max<std::size_t>(1, P_o / 8);
    const SimConfig cfg{.P_b = 1, .P_o = P_o, .R = R, .c = std::max(set.c_out, set.c_in),
                        .n = set.n, .b = 1};
    const auto act = detail::normal_complex(rng, 1, set.c_in, set.n);
    try {
      const auto rep = simulate_tile(schedule_kernel_tile(set, P_o, R), act, cfg);
      detail::note(r, relative_error(rep.outputs, dense_hadamard_reference(set, act)),
                   "layer " + std::to_string(l));
    } catch (const Error& e) {
      r.worst = INFINITY;
      if (r.detail.empty()) r.detail = "layer " + std::to_string(l) + ": " + e.what();
    }
  }
  if (layers.empty() && r.detail.empty()) r.detail = "file holds no layers";
  return detail::finish(r);
}

inline void print_table(std::ostream& out, const std::vector<CheckResult>& results) {
  char line[256];
  std::snprintf(line, sizeof line, "%-34s %6s %12s %12s  %s\n", "check", "cases", "worst",
                "tolerance", "result");
  out << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-34s %6zu %12.3e %12.3e  %s\n", r.name.c_str(), r.cases,
                  r.worst, r.tolerance, r.pass ? "PASS" : "FAIL");
    out << line;
    if (!r.pass) out << "    cause: " << r.detail << '\n';
  }
}

}  // namespace sparsespec::verify
