#include <catch_amalgamated.hpp>

#include "sparsespec/accel_sim.hpp"
#include "test_util.hpp"

using namespace sparsespec;

namespace {

SparseSpectralKernelSet random_set(std::mt19937_64& rng, std::size_t c_out, std::size_t c_in,
                                   std::size_t n, std::size_t k) {
  return SparseSpectralKernelSet::from_dense(testutil::random_complex(rng, c_out, c_in, n), k);
}

// Entry-by-entry accumulation straight from the sparse lists.
ComplexTensor sparse_reference(const SparseSpectralKernelSet& set, const ComplexTensor& act) {
  ComplexTensor y(act.dim(0), set.c_out, set.n, set.n);
  for (std::size_t b = 0; b < act.dim(0); ++b)
    for (std::size_t j = 0; j < set.c_out; ++j)
      for (std::size_t i = 0; i < set.c_in; ++i) {
        const auto& m = set.map(j, i);
        for (std::size_t e = 0; e < m.nnz(); ++e)
          y.map(b, j)[m.index[e]] += act.map(b, i)[m.index[e]] * m.value[e];
      }
  return y;
}

double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) {
  double d = 0.0;
  for (std::size_t u = 0; u < a.size(); ++u) d = std::max(d, std::abs(a.data()[u] - b.data()[u]));
  return d;
}

}  // namespace

TEST_CASE("functional replay matches sparse accumulation", "[sim]") {
  std::mt19937_64 rng(11);
  for (std::size_t P_o : {4u, 8u})
    for (std::size_t R : {std::size_t{1}, std::size_t{2}, P_o}) {
      const auto set = random_set(rng, 10, 3, 8, 16);  // 10 outputs: short final group
      const auto act = testutil::random_complex(rng, 3, 3, 8);
      const SimConfig cfg{.P_b = 2, .P_o = P_o, .R = R, .c = 10, .n = 8, .b = 3};
      const auto rep = simulate_tile(schedule_kernel_tile(set, P_o, R), act, cfg);
      INFO("P_o=" << P_o << " R=" << R);
      CHECK(max_abs_diff(rep.outputs, sparse_reference(set, act)) < 1e-12);
      CHECK(max_abs_diff(rep.outputs, dense_hadamard_reference(set, act)) < 1e-12);
      CHECK(rep.useful_macs == 3u * 10 * 3 * 16);
    }
}

TEST_CASE("cycles per group equal lambda times k", "[sim]") {
  std::mt19937_64 rng(12);
  const auto set = random_set(rng, 8, 2, 8, 16);
  const auto sched = schedule_kernel_tile(set, 8, 2);
  const ComplexTensor act(1, 2, 8, 8);
  const SimConfig cfg{.P_b = 1, .P_o = 8, .R = 2, .c = 8, .n = 8, .b = 1};
  const auto rep = simulate_tile(sched, act, cfg);
  double rows = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& t = sched.at(0, i);
    CHECK(double(t.rows()) == Catch::Approx(t.lambda() * double(t.k)));
    rows += double(t.rows());
  }
  CHECK(double(rep.cycles) == rows);
  // no padding, one lane: measured utilization is 1 / lambda-bar
  const auto stats = lambda_stats(set, 8, 2);
  CHECK(rep.utilization() == Catch::Approx(1.0 / stats.mean_lambda));
  CHECK(rep.lambda_utilization() == Catch::Approx(1.0 / stats.mean_lambda));
  CHECK(rep.bank_reads == rep.cycles * 2);
}

TEST_CASE("R equal to P_o gives full utilization", "[sim]") {
  std::mt19937_64 rng(13);
  const auto set = random_set(rng, 8, 3, 8, 8);
  const ComplexTensor act(1, 3, 8, 8);
  const SimConfig cfg{.P_b = 1, .P_o = 8, .R = 8, .c = 8, .n = 8, .b = 1};
  const auto rep = simulate_tile(schedule_kernel_tile(set, 8, 8), act, cfg);
  CHECK(rep.cycles == 3u * 8);
  CHECK(rep.utilization() == 1.0);
}

TEST_CASE("doubling P_b halves the cycle count", "[sim]") {
  std::mt19937_64 rng(14);
  const auto set = random_set(rng, 4, 2, 8, 16);
  const auto sched = schedule_kernel_tile(set, 4, 2);
  const auto act = testutil::random_complex(rng, 8, 2, 8);
  std::uint64_t prev = 0;
  for (std::size_t P_b : {1u, 2u, 4u, 8u}) {
    const SimConfig cfg{.P_b = P_b, .P_o = 4, .R = 2, .c = 4, .n = 8, .b = 8};
    const auto rep = simulate_tile(sched, act, cfg);
    if (prev) CHECK(rep.cycles * 2 == prev);
    prev = rep.cycles;
  }
}

TEST_CASE("timing-only mode counts the same cycles", "[sim]") {
  std::mt19937_64 rng(15);
  const auto set = random_set(rng, 6, 2, 8, 32);
  const auto sched = schedule_kernel_tile(set, 4, 2);
  const auto act = testutil::random_complex(rng, 2, 2, 8);
  const SimConfig cfg{.P_b = 1, .P_o = 4, .R = 2, .c = 6, .n = 8, .b = 2};
  const auto f = simulate_tile(sched, act, cfg);
  const auto t = simulate_tile(sched, act, cfg, SimMode::timing_only);
  CHECK(f.cycles == t.cycles);
  CHECK(f.useful_macs == t.useful_macs);
  CHECK(t.outputs.size() == 0);
}

TEST_CASE("layer simulation equals the spectral convolution", "[sim][layer]") {
  std::mt19937_64 rng(16);
  const ConvLayerSpec layer{.c_in = 5, .c_out = 6, .h_krn = 3, .stride = 1, .padding = 1, .n = 8};
  const auto set = random_set(rng, 6, 5, 8, 16);
  const auto x = testutil::random_spatial(rng, 3, 5, 14);
  const auto ref = spectral_conv(x, set.to_dense(), layer);
  for (std::size_t c : {2u, 4u, 6u}) {
    const SimConfig cfg{.P_b = 2, .P_o = 4, .R = 2, .c = c, .n = 8, .b = 3};
    const auto res = simulate_layer(set, x, layer, cfg);
    INFO("c=" << c);
    CHECK(relative_error(res.output, ref) < 1e-6);
  }

  auto strided = layer;
  strided.stride = 2;
  const SimConfig cfg{.P_b = 1, .P_o = 2, .R = 1, .c = 3, .n = 8, .b = 3};
  CHECK(relative_error(simulate_layer(set, x, strided, cfg).output,
                       spectral_conv(x, set.to_dense(), strided)) < 1e-6);
}

TEST_CASE("layer cycles halve when P_b doubles", "[sim][layer]") {
  std::mt19937_64 rng(17);
  const ConvLayerSpec layer{.c_in = 2, .c_out = 4, .h_krn = 3, .padding = 1, .n = 8};
  const auto set = random_set(rng, 4, 2, 8, 16);
  const auto x = testutil::random_spatial(rng, 4, 2, 10);
  const SimConfig one{.P_b = 1, .P_o = 4, .R = 2, .c = 4, .n = 8, .b = 4};
  auto two = one;
  two.P_b = 2;
  const auto c1 = simulate_layer(set, x, layer, one, SimMode::timing_only).report.cycles;
  const auto c2 = simulate_layer(set, x, layer, two, SimMode::timing_only).report.cycles;
  CHECK(c1 == 2 * c2);
}

TEST_CASE("utilization sweep", "[sim][sweep]") {
  std::mt19937_64 rng(18);
  const std::vector<SparseSpectralKernelSet> layers{random_set(rng, 8, 1, 8, 16),
                                                    random_set(rng, 16, 8, 8, 16)};
  const std::vector<std::size_t> P_o{4, 8, 16}, R{1, 2, 4, 8, 16};
  const auto rows = utilization_sweep(layers, P_o, R);
  CHECK(rows.size() == 3u + 4u + 5u);
  for (const auto& r : rows) {
    INFO("P_o=" << r.P_o << " R=" << r.R);
    CHECK(r.alpha == 4.0);
    CHECK(r.utilization > 0.0);
    CHECK(r.utilization <= 1.0);
    if (r.R == r.P_o) CHECK(r.utilization == 1.0);
  }
  for (std::size_t a = 1; a < rows.size(); ++a)
    if (rows[a].P_o == rows[a - 1].P_o) CHECK(rows[a].utilization >= rows[a - 1].utilization);

  // single layer: the sweep reproduces the schedule statistics
  const auto one = utilization_sweep(std::span(layers).subspan(1), std::vector<std::size_t>{8},
                                     std::vector<std::size_t>{2});
  CHECK(one.front().utilization == Catch::Approx(lambda_stats(layers[1], 8, 2).utilization()));
}

TEST_CASE("simulator rejects inconsistent inputs", "[sim][error]") {
  std::mt19937_64 rng(19);
  const auto set = random_set(rng, 4, 2, 8, 16);
  const auto sched = schedule_kernel_tile(set, 4, 2);
  const ComplexTensor act(1, 2, 8, 8);
  SimConfig cfg{.P_b = 1, .P_o = 4, .R = 2, .c = 4, .n = 8, .b = 1};
  CHECK_NOTHROW(simulate_tile(sched, act, cfg));

  auto bad = cfg;
  bad.R = 4;
  CHECK_THROWS_AS(simulate_tile(sched, act, bad), ConfigError);
  bad = cfg;
  bad.R = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.b = 2;
  CHECK_THROWS_AS(simulate_tile(sched, act, bad), DimensionError);

  auto corrupt = sched;
  for (auto& e : corrupt.tables[0].value_tables[0])
    if (e.valid) {
      e.sel = 3;
      break;
    }
  CHECK_THROWS_AS(simulate_tile(corrupt, act, cfg), FormatError);
}
