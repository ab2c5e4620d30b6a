#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sparsespec/error.hpp"
#include "sparsespec/workloads.hpp"

namespace sparsespec {

struct PlatformSpec {
  double S_DSP = 3600;   // complex multiplier-adders
  double S_BRAM = 1470;  // 36Kb blocks
  double S_BW = 0;       // external bandwidth, complex words per cycle; 0 = unbounded
  double F = 200e6;      // Hz
  double bytes_per_word = 4;

  void validate() const {
    detail::require<ConfigError>(S_DSP > 0 && S_BRAM > 0 && F > 0 && S_BW >= 0 &&
                                     bytes_per_word > 0,
                                 "platform: S_DSP, S_BRAM, F and bytes_per_word must be positive");
  }
};

struct DesignPoint {
  std::size_t P_b = 1;
  std::size_t P_o = 1;
  std::size_t R = 1;
  std::size_t c = 0;        // channel tile for the bandwidth term; 0 = P_o
  double lambda_bar = 1.0;  // mean scheduled rows per non-zero

  // filled by evaluate()
  double t_sys = 0.0;             // ops/s
  double bw_required = 0.0;       // complex words per cycle
  double bw_scale = 1.0;          // min{1, S_BW / (2 S_BW^req)}
  double dsp_used = 0.0;
  double bram_used = 0.0;
  bool dsp_ok = false;
  bool bram_ok = false;

  [[nodiscard]] double utilization() const noexcept { return 1.0 / lambda_bar; }
  [[nodiscard]] bool feasible() const noexcept { return dsp_ok && bram_ok; }
  [[nodiscard]] std::size_t channel_tile() const noexcept { return c ? c : P_o; }
};

inline double dsp_usage(std::size_t P_b, std::size_t P_o) { return double(P_b) * double(P_o); }

inline double bram_usage(std::size_t P_b, std::size_t P_o, std::size_t R) {
  return double(P_b) * double(R + P_o) + 1.5 * double(P_o);
}

// Words per cycle streamed between DDR and the FFT/IFFT modules:
// 2 P_b n^2 / Omega_H with Omega_H = c * lambda-bar * k cycles per tile.
inline double required_bandwidth(const DesignPoint& dp, std::size_t n, std::size_t k) {
  const double omega = double(dp.channel_tile()) * dp.lambda_bar * double(k);
  return 2.0 * double(dp.P_b) * double(n * n) / omega;
}

// Fills throughput, bandwidth and resource fields of `dp`.
inline DesignPoint evaluate(DesignPoint dp, const PlatformSpec& plat, std::size_t n, std::size_t k) {
  plat.validate();
  detail::require<ConfigError>(std::isfinite(dp.lambda_bar) && dp.lambda_bar >= 1.0,
                               "design point: lambda-bar must be >= 1, got " +
                                   std::to_string(dp.lambda_bar));
  detail::require<ConfigError>(dp.P_b >= 1 && dp.P_o >= 1 && dp.R >= 1 && dp.R <= dp.P_o,
                               "design point: need P_b, P_o >= 1 and 1 <= R <= P_o");
  dp.bw_required = required_bandwidth(dp, n, k);
  dp.bw_scale = plat.S_BW > 0 ? std::min(1.0, 0.5 * plat.S_BW / dp.bw_required) : 1.0;
  dp.t_sys = dp.utilization() * double(dp.P_o) * double(dp.P_b) * 2.0 * dp.bw_scale * plat.F;
  dp.dsp_used = dsp_usage(dp.P_b, dp.P_o);
  dp.bram_used = bram_usage(dp.P_b, dp.P_o, dp.R);
  dp.dsp_ok = dp.dsp_used <= plat.S_DSP;
  dp.bram_ok = dp.bram_used <= plat.S_BRAM;
  return dp;
}

inline double t_sys(const DesignPoint& dp, const PlatformSpec& plat, std::size_t n, std::size_t k) {
  return evaluate(dp, plat, n, k).t_sys;
}

// Frames per second: Hadamard throughput (T_sys / 2 multiply-accumulates per
// second) over the non-zero MACs of one image.
inline double fps(const DesignPoint& dp, const PlatformSpec& plat, const WorkloadSpec& wl) {
  const auto macs = wl.macs_per_image();
  detail::require<ConfigError>(macs > 0, "fps: workload '" + wl.name + "' has no MACs");
  return t_sys(dp, plat, wl.n, wl.nonzeros()) / 2.0 / double(macs);
}

// Off-chip traffic in bytes per second.
inline double bandwidth_bytes_per_s(const DesignPoint& dp, const PlatformSpec& plat, std::size_t n,
                                    std::size_t k) {
  return required_bandwidth(dp, n, k) * plat.F * plat.bytes_per_word;
}

// ---------------------------------------------------------------------------
// Utilization table: (P_o, R, alpha) -> 1 / lambda-bar
// ---------------------------------------------------------------------------

struct UtilizationEntry {
  std::size_t P_o = 0;
  std::size_t R = 0;
  double alpha = 0.0;
  double utilization = 0.0;
};

class UtilizationTable {
 public:
  UtilizationTable() = default;
  explicit UtilizationTable(std::vector<UtilizationEntry> entries) : entries_(std::move(entries)) {
    for (const auto& e : entries_)
      detail::require<ConfigError>(e.utilization > 0.0 && e.utilization <= 1.0,
                                   "utilization table: value outside (0, 1] for P_o=" +
                                       std::to_string(e.P_o) + ", R=" + std::to_string(e.R));
  }

  [[nodiscard]] std::optional<double> utilization(std::size_t P_o, std::size_t R,
                                                  double alpha) const {
    for (const auto& e : entries_)
      if (e.P_o == P_o && e.R == R && std::abs(e.alpha - alpha) < 1e-9) return e.utilization;
    return std::nullopt;
  }

  // R values listed for (P_o, alpha), ascending.
  [[nodiscard]] std::vector<std::size_t> replicas(std::size_t P_o, double alpha) const {
    std::vector<std::size_t> r;
    for (const auto& e : entries_)
      if (e.P_o == P_o && std::abs(e.alpha - alpha) < 1e-9) r.push_back(e.R);
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    return r;
  }

  [[nodiscard]] const std::vector<UtilizationEntry>& entries() const noexcept { return entries_; }

  // CSV with a header naming at least P_o, R, alpha and utilization (the
  // sweep output of the simulator is accepted as is).
  static UtilizationTable from_csv(std::istream& in) {
    std::string line;
    detail::require<FormatError>(bool(std::getline(in, line)), "utilization table: empty input");
    const auto header = split(line);
    auto col = [&](const std::string& name) {
      const auto it = std::find(header.begin(), header.end(), name);
      detail::require<FormatError>(it != header.end(),
                                   "utilization table: missing column '" + name + "'");
      return std::size_t(it - header.begin());
    };
    const std::size_t cP = col("P_o"), cR = col("R"), cA = col("alpha"), cU = col("utilization");
    std::vector<UtilizationEntry> rows;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
      if (line.empty()) continue;
      const auto f = split(line);
      detail::require<FormatError>(f.size() == header.size(),
                                   "utilization table: line " + std::to_string(lineno) +
                                       " has " + std::to_string(f.size()) + " fields");
      try {
        rows.push_back({std::stoul(f[cP]), std::stoul(f[cR]), std::stod(f[cA]), std::stod(f[cU])});
      } catch (const std::logic_error&) {
        throw FormatError("utilization table: bad number on line " + std::to_string(lineno));
      }
    }
    return UtilizationTable(std::move(rows));
  }

 private:
  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) {
      f.erase(0, f.find_first_not_of(" \t\r"));
      f.erase(f.find_last_not_of(" \t\r") + 1);
      out.push_back(f);
    }
    return out;
  }

  std::vector<UtilizationEntry> entries_;
};

// ---------------------------------------------------------------------------
// Exploration
// ---------------------------------------------------------------------------

struct ExploreOptions {
  std::vector<std::size_t> P_b{10};
  std::vector<std::size_t> P_o;  // empty: powers of two up to S_DSP
  std::size_t channel_tile = 0;  // 0 = P_o
};

struct ExploreResult {
  DesignPoint best;
  std::vector<DesignPoint> frontier;  // every evaluated candidate, feasible or not
};

// Strict preference: higher throughput, then fewer BRAMs, then fewer
// replicas, then smaller P_b and P_o.
inline bool better_design(const DesignPoint& a, const DesignPoint& b) {
  const double tol = 1e-12 * std::max(a.t_sys, b.t_sys);
  if (std::abs(a.t_sys - b.t_sys) > tol) return a.t_sys > b.t_sys;
  if (a.bram_used != b.bram_used) return a.bram_used < b.bram_used;
  if (a.R != b.R) return a.R < b.R;
  if (a.P_b != b.P_b) return a.P_b < b.P_b;
  return a.P_o < b.P_o;
}

inline ExploreResult explore(const PlatformSpec& plat, const WorkloadSpec& wl,
                             const UtilizationTable& table, const ExploreOptions& opt = {}) {
  plat.validate();
  std::vector<std::size_t> P_o_list = opt.P_o;
  if (P_o_list.empty())
    for (std::size_t p = 1; double(p) <= plat.S_DSP; p <<= 1) P_o_list.push_back(p);
  const std::size_t k = wl.nonzeros();

  ExploreResult res;
  std::optional<DesignPoint> best;
  for (std::size_t P_b : opt.P_b)
    for (std::size_t P_o : P_o_list)
      for (std::size_t R : table.replicas(P_o, wl.alpha)) {
        if (R > P_o) continue;
        DesignPoint dp{.P_b = P_b, .P_o = P_o, .R = R, .c = opt.channel_tile,
                       .lambda_bar = 1.0 / *table.utilization(P_o, R, wl.alpha)};
        dp = evaluate(dp, plat, wl.n, k);
        res.frontier.push_back(dp);
        if (dp.feasible() && (!best || better_design(dp, *best))) best = dp;
      }
  detail::require<InfeasibleError>(best.has_value(),
                                   "explore: no feasible design point among " +
                                       std::to_string(res.frontier.size()) + " candidates");
  res.best = *best;
  return res;
}

inline void write_frontier_csv(std::ostream& out, const std::vector<DesignPoint>& frontier,
                               const WorkloadSpec& wl) {
  out << "P_b,P_o,R,utilization,t_sys,fps,bram_used,dsp_used,feasible\n";
  const double macs = double(wl.macs_per_image());
  for (const auto& d : frontier)
    out << d.P_b << ',' << d.P_o << ',' << d.R << ',' << d.utilization() << ',' << d.t_sys << ','
        << d.t_sys / 2.0 / macs << ',' << d.bram_used << ',' << d.dsp_used << ','
        << (d.feasible() ? 1 : 0) << '\n';
}

}  // namespace sparsespec
