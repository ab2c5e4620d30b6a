#include <catch_amalgamated.hpp>

#include <sstream>

#include "sparsespec/dse.hpp"

using namespace sparsespec;

namespace {

// Utilizations shaped like the published replica sweep: util(64, 16) = 0.99
// and util(128, 10) above 0.8.
UtilizationTable reference_table(double alpha = 4.0) {
  const std::size_t Rs[] = {1, 2, 4, 8, 10, 16};
  const double util[][6] = {
      {0.45, 0.72, 0.93, 1.00, 1.00, 1.00},  // P_o = 8
      {0.30, 0.55, 0.82, 0.97, 0.99, 1.00},  // 16
      {0.20, 0.40, 0.68, 0.90, 0.95, 0.99},  // 32
      {0.12, 0.27, 0.52, 0.80, 0.88, 0.99},  // 64
      {0.07, 0.17, 0.37, 0.70, 0.82, 0.93},  // 128
  };
  std::vector<UtilizationEntry> e;
  std::size_t P_o = 8;
  for (const auto& row : util) {
    for (std::size_t r = 0; r < 6; ++r) e.push_back({P_o, Rs[r], alpha, row[r]});
    P_o *= 2;
  }
  return UtilizationTable(e);
}

DesignPoint paper_point(double util) {
  return {.P_b = 10, .P_o = 64, .R = 16, .lambda_bar = 1.0 / util};
}

}  // namespace

TEST_CASE("throughput formula", "[dse]") {
  const PlatformSpec unbounded{.S_BW = 0, .F = 200e6};
  CHECK(t_sys(DesignPoint{}, unbounded, 8, 16) == 2 * 200e6);
  CHECK(t_sys(paper_point(0.99), unbounded, 8, 16) == Catch::Approx(2.534e11).epsilon(1e-3));

  // halving S_BW inside the bandwidth-bound region halves T_sys
  const auto dp = evaluate(paper_point(0.99), unbounded, 8, 16);
  PlatformSpec tight{.S_BW = dp.bw_required * 0.5};
  const double t1 = t_sys(dp, tight, 8, 16);
  tight.S_BW *= 0.5;
  CHECK(t_sys(dp, tight, 8, 16) == Catch::Approx(t1 / 2));
  CHECK(t1 == Catch::Approx(dp.t_sys / 4));

  CHECK_THROWS_AS(t_sys(DesignPoint{.lambda_bar = 0.9}, unbounded, 8, 16), ConfigError);
  CHECK_THROWS_AS(t_sys(DesignPoint{.P_o = 4, .R = 5}, unbounded, 8, 16), ConfigError);
}

TEST_CASE("required bandwidth follows the per-tile cycle budget", "[dse]") {
  const PlatformSpec plat{};
  const auto dp = paper_point(0.99);
  // 2 * P_b * n^2 words every c * lambda * k cycles, c = P_o = 64, k = 16
  const double expect = 2.0 * 10 * 64 / (64 * (1 / 0.99) * 16);
  CHECK(required_bandwidth(dp, 8, 16) == Catch::Approx(expect));
  CHECK(bandwidth_bytes_per_s(dp, plat, 8, 16) == Catch::Approx(expect * 200e6 * 4));
  CHECK(bandwidth_bytes_per_s(dp, plat, 8, 16) < 21e9);

  auto narrow = dp;
  narrow.c = 16;
  CHECK(required_bandwidth(narrow, 8, 16) == Catch::Approx(4 * expect));
}

TEST_CASE("frames per second on the VGG16 workload", "[dse][fps]") {
  const PlatformSpec plat{};
  const double f4 = fps(paper_point(0.99), plat, vgg16_workload(8, 4));
  const double f8 = fps(paper_point(0.96), plat, vgg16_workload(8, 8));
  const double f2 = fps(paper_point(1.00), plat, vgg16_workload(8, 2));
  CHECK(f4 >= 126);
  CHECK(f4 <= 170);
  CHECK(f8 / f4 >= 1.8);
  CHECK(f8 / f4 <= 2.0);
  CHECK(f2 / f4 == Catch::Approx(0.5).epsilon(0.05));

  const auto wl = vgg16_workload(8, 4);
  const auto dp = evaluate(paper_point(0.99), plat, 8, 16);
  CHECK(f4 * double(wl.macs_per_image()) == Catch::Approx(dp.t_sys / 2));

  WorkloadSpec empty{"empty", {}, 8, 4};
  CHECK_THROWS_AS(fps(dp, plat, empty), ConfigError);
}

TEST_CASE("exploration finds the published optimum", "[dse][explore]") {
  const PlatformSpec plat{.S_DSP = 3600, .S_BRAM = 1470};
  const auto res = explore(plat, vgg16_workload(8, 4), reference_table());
  CHECK(res.best.P_b == 10);
  CHECK(res.best.P_o == 64);
  CHECK(res.best.R == 16);
  CHECK(res.best.dsp_used <= plat.S_DSP);
  CHECK(res.best.bram_used <= plat.S_BRAM);
  CHECK(res.best.bram_used == 10 * (16 + 64) + 96);
  CHECK(res.frontier.size() == 28);  // R > P_o skipped for P_o = 8

  // P_o = 128 overflows BRAM even without replication
  for (const auto& d : res.frontier)
    if (d.P_o == 128) CHECK_FALSE(d.bram_ok);
}

TEST_CASE("ties prefer fewer BRAMs, then fewer replicas", "[dse][explore]") {
  const std::vector<UtilizationEntry> e{{8, 4, 4.0, 1.0}, {8, 2, 4.0, 1.0}, {8, 8, 4.0, 1.0}};
  const auto res = explore(PlatformSpec{}, vgg16_workload(8, 4), UtilizationTable(e),
                           {.P_b = {1}, .P_o = {8}});
  CHECK(res.best.R == 2);

  DesignPoint a{.R = 1, .t_sys = 5, .bram_used = 10}, b{.R = 2, .t_sys = 5, .bram_used = 9};
  CHECK(better_design(b, a));
  b.bram_used = 10;
  CHECK(better_design(a, b));
}

TEST_CASE("exploration monotonicity and errors", "[dse][explore]") {
  const auto wl = vgg16_workload(8, 4);
  const auto table = reference_table();
  const ExploreOptions opt{.P_b = {4, 8, 10, 12}};

  double prev = 0;
  for (double bram : {200.0, 400.0, 800.0, 1470.0, 3000.0}) {
    const auto r = explore(PlatformSpec{.S_BRAM = bram}, wl, table, opt);
    CHECK(r.best.t_sys >= prev);
    prev = r.best.t_sys;
  }
  prev = 0;
  for (double dsp : {64.0, 256.0, 1000.0, 3600.0}) {
    const auto r = explore(PlatformSpec{.S_DSP = dsp}, wl, table, opt);
    CHECK(r.best.t_sys >= prev);
    prev = r.best.t_sys;
  }
  prev = 0;
  for (double bw : {0.5, 1.0, 2.0, 4.0, 0.0}) {
    const auto r = explore(PlatformSpec{.S_BW = bw}, wl, table, opt);
    CHECK(r.best.t_sys >= prev);
    prev = r.best.t_sys;
  }

  CHECK_THROWS_AS(explore(PlatformSpec{.S_DSP = 4}, wl, table), InfeasibleError);
  CHECK_THROWS_AS(explore(PlatformSpec{}, wl, UtilizationTable{}), InfeasibleError);
  CHECK_THROWS_AS(UtilizationTable({{8, 2, 4.0, 1.5}}), ConfigError);
}

TEST_CASE("utilization table CSV", "[dse][io]") {
  std::istringstream in("P_o,R,alpha,utilization,cycles\n64,16,4,0.99,100\n64,8,4,0.8,120\n\n");
  const auto t = UtilizationTable::from_csv(in);
  CHECK(t.entries().size() == 2);
  CHECK(*t.utilization(64, 16, 4.0) == 0.99);
  CHECK_FALSE(t.utilization(64, 16, 8.0).has_value());
  CHECK(t.replicas(64, 4.0) == std::vector<std::size_t>{8, 16});

  std::istringstream missing("P_o,R,utilization\n64,16,0.99\n");
  CHECK_THROWS_AS(UtilizationTable::from_csv(missing), FormatError);
  std::istringstream ragged("P_o,R,alpha,utilization\n64,16,4\n");
  CHECK_THROWS_AS(UtilizationTable::from_csv(ragged), FormatError);
  std::istringstream junk("P_o,R,alpha,utilization\n64,x,4,0.9\n");
  CHECK_THROWS_AS(UtilizationTable::from_csv(junk), FormatError);
  std::istringstream empty("");
  CHECK_THROWS_AS(UtilizationTable::from_csv(empty), FormatError);
}

TEST_CASE("frontier CSV layout", "[dse][io]") {
  const auto wl = vgg16_workload(8, 4);
  const auto res = explore(PlatformSpec{}, wl, reference_table());
  std::ostringstream out;
  write_frontier_csv(out, res.frontier, wl);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "P_b,P_o,R,utilization,t_sys,fps,bram_used,dsp_used,feasible");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == res.frontier.size());
}
