#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sparsespec/error.hpp"
#include "sparsespec/sparse_format.hpp"
#include "sparsespec/spectral_conv.hpp"
#include "sparsespec/tensor.hpp"

namespace sparsespec {

// Hadamard-engine configuration. P_b batch lanes each hold one group of P_o
// multipliers; every lane reads its own activation map through R replicas.
struct SimConfig {
  std::size_t P_b = 1;
  std::size_t P_o = 1;
  std::size_t R = 1;
  std::size_t c = 1;  // channel tile
  std::size_t n = 8;
  std::size_t b = 1;  // batch size

  [[nodiscard]] std::size_t multipliers() const noexcept { return P_b * P_o; }

  void validate() const {
    using detail::require;
    require<ConfigError>(P_b >= 1 && P_o >= 1 && c >= 1 && b >= 1,
                         "sim config: P_b, P_o, c and b must be >= 1");
    require<ConfigError>(R >= 1 && R <= P_o, "sim config: need 1 <= R <= P_o, got R = " +
                                                 std::to_string(R) + ", P_o = " +
                                                 std::to_string(P_o));
    require<ConfigError>(is_pow2(n), "sim config: n must be a power of two");
  }
};

// Schedules for a c_out x c_in kernel tile: one ScheduledTables per
// (output group g, input channel i), stored at g * c_in + i.
struct KernelTileSchedule {
  std::size_t c_out = 0;
  std::size_t c_in = 0;
  std::size_t n = 0;
  std::size_t P_o = 0;
  std::size_t R = 0;
  std::vector<ScheduledTables> tables;

  [[nodiscard]] std::size_t groups() const noexcept { return group_count(c_out, P_o); }
  [[nodiscard]] const ScheduledTables& at(std::size_t g, std::size_t i) const {
    return tables[g * c_in + i];
  }
};

inline KernelTileSchedule schedule_kernel_tile(const SparseSpectralKernelSet& set, std::size_t P_o,
                                               std::size_t R) {
  set.validate();
  KernelTileSchedule s{set.c_out, set.c_in, set.n, P_o, R, {}};
  const std::size_t G = s.groups();
  s.tables.reserve(G * set.c_in);
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t i = 0; i < set.c_in; ++i)
      s.tables.push_back(build_group_schedule(output_group(set, i, g, P_o), R));
  return s;
}

struct SimReport {
  std::uint64_t cycles = 0;
  std::uint64_t useful_macs = 0;     // products feeding a real output channel
  std::uint64_t issued_macs = 0;     // valid rows executed, including padded lanes of short groups
  std::uint64_t multipliers = 0;     // P_b * P_o
  std::uint64_t lane_cycles = 0;     // sum over groups and input channels of rows, one lane
  std::uint64_t lane_nonzeros = 0;   // sum over groups and input channels of k, one lane
  std::uint64_t bank_reads = 0;
  std::vector<double> group_lambda;  // per (g, i) of the last scheduled tile set
  ComplexTensor outputs;             // (b, c_out, n, n) spectral outputs of simulate_tile

  // useful MACs / (P * cycles)
  [[nodiscard]] double utilization() const noexcept {
    return cycles ? double(useful_macs) / double(multipliers * cycles) : 0.0;
  }
  // 1 / lambda-bar: multipliers busy per cycle, counting padded lanes as busy.
  [[nodiscard]] double lambda_utilization() const noexcept {
    return lane_cycles ? double(lane_nonzeros) / double(lane_cycles) : 0.0;
  }

  void accumulate(const SimReport& o) {
    cycles += o.cycles;
    useful_macs += o.useful_macs;
    issued_macs += o.issued_macs;
    multipliers = o.multipliers;
    lane_cycles += o.lane_cycles;
    lane_nonzeros += o.lane_nonzeros;
    bank_reads += o.bank_reads;
    group_lambda = o.group_lambda;
  }
};

enum class SimMode { functional, timing_only };

// Row-by-row replay of the sparse Hadamard engine on one activation tile
// (b, c_in, n, n). Each cycle one index-table row broadcasts R addresses, one
// per replica bank; every multiplier whose value-table row is valid takes the
// replica named by `sel`, multiplies by its kernel value and accumulates into
// its private output map. Lanes run in lockstep, so the batch takes
// ceil(b / P_b) passes over the tables.
inline SimReport simulate_tile(const KernelTileSchedule& sched, const ComplexTensor& act_tile,
                               const SimConfig& cfg, SimMode mode = SimMode::functional) {
  using detail::require;
  cfg.validate();
  require<ConfigError>(sched.P_o == cfg.P_o && sched.R == cfg.R,
                       "simulate_tile: tables built for (P_o=" + std::to_string(sched.P_o) +
                           ", R=" + std::to_string(sched.R) + ") but config has (P_o=" +
                           std::to_string(cfg.P_o) + ", R=" + std::to_string(cfg.R) + ")");
  require<DimensionError>(sched.tables.size() == sched.groups() * sched.c_in,
                          "simulate_tile: schedule holds the wrong number of groups");
  require<DimensionError>(act_tile.dim(0) == cfg.b && act_tile.dim(1) == sched.c_in &&
                              act_tile.dim(2) == sched.n && act_tile.dim(3) == sched.n &&
                              sched.n == cfg.n,
                          "simulate_tile: activation tile " + shape_str(act_tile.shape()) +
                              " does not match schedule/config");

  const std::size_t P_o = cfg.P_o, R = cfg.R, G = sched.groups();
  SimReport rep;
  rep.multipliers = cfg.multipliers();
  if (mode == SimMode::functional) rep.outputs = ComplexTensor(cfg.b, sched.c_out, cfg.n, cfg.n);

  for (const auto& t : sched.tables) {
    require<ConfigError>(t.P_o == P_o && t.R == R, "simulate_tile: table/config mismatch");
    rep.group_lambda.push_back(t.lambda());
  }

  std::vector<Complex> bank(R);
  const std::size_t passes = (cfg.b + cfg.P_b - 1) / cfg.P_b;
  for (std::size_t pass = 0; pass < passes; ++pass) {
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t i = 0; i < sched.c_in; ++i) {
        const auto& t = sched.at(g, i);
        rep.cycles += t.rows();
        if (pass == 0) {
          rep.lane_cycles += t.rows();
          rep.lane_nonzeros += t.k;
        }
        for (std::size_t lane = 0; lane < cfg.P_b; ++lane) {
          const std::size_t img = pass * cfg.P_b + lane;
          if (img >= cfg.b) break;  // idle lane in the final pass
          const auto x = act_tile.map(img, i);
          for (std::size_t row = 0; row < t.rows(); ++row) {
            // one read per replica bank per cycle
            for (std::size_t r = 0; r < R; ++r) bank[r] = x[t.address(row, r)];
            rep.bank_reads += R;
            for (std::size_t p = 0; p < P_o; ++p) {
              const auto& e = t.value_tables[p][row];
              if (!e.valid) continue;
              require<FormatError>(e.sel < R, "simulate_tile: sel " + std::to_string(e.sel) +
                                                  " >= R");
              ++rep.issued_macs;
              const std::size_t j = g * P_o + p;
              if (j >= sched.c_out) continue;  // padding lane of a short group
              ++rep.useful_macs;
              if (mode == SimMode::functional)
                rep.outputs.map(img, j)[t.address(row, e.sel)] += bank[e.sel] * e.value;
            }
          }
        }
      }
  }
  return rep;
}

// Dense masked reference: sum_i X~[k,i] o W~[j,i] with pruned entries zero.
inline ComplexTensor dense_hadamard_reference(const SparseSpectralKernelSet& set,
                                              const ComplexTensor& act_tile) {
  return hadamard_reduce(act_tile, set.to_dense());
}

// Sub-kernel set for output channels [j0, j1) and input channels [i0, i1).
inline SparseSpectralKernelSet kernel_subset(const SparseSpectralKernelSet& set, std::size_t j0,
                                             std::size_t j1, std::size_t i0, std::size_t i1) {
  SparseSpectralKernelSet s{j1 - j0, i1 - i0, set.n, set.k, {}};
  s.maps.reserve(s.c_out * s.c_in);
  for (std::size_t j = j0; j < j1; ++j)
    for (std::size_t i = i0; i < i1; ++i) s.maps.push_back(set.map(j, i));
  return s;
}

struct LayerSimResult {
  SimReport report;
  SpatialTensor output;
};

// Full layer: spectral input tiles are produced with the host FFT, every
// (output-channel tile, input-channel tile) kernel tile is scheduled once and
// replayed for each overlap-and-add tile position, and the accumulated
// spectral outputs go through IFFT and overlap-add.
inline LayerSimResult simulate_layer(const SparseSpectralKernelSet& set, const SpatialTensor& x,
                                     const ConvLayerSpec& layer, const SimConfig& cfg,
                                     SimMode mode = SimMode::functional) {
  using detail::require;
  set.validate();
  cfg.validate();
  require<DimensionError>(set.c_out == layer.c_out && set.c_in == layer.c_in && set.n == layer.n,
                          "simulate_layer: kernel set does not match layer");
  require<DimensionError>(x.dim(0) == cfg.b && cfg.n == layer.n,
                          "simulate_layer: batch or FFT size differs from config");

  const auto x_tiles = spectral_tiles(x, layer);
  const std::size_t h = x.dim(2), T = layer.tiles_per_side(h), positions = T * T;
  const std::size_t n = layer.n, c = cfg.c;

  ComplexTensor y_tiles(x_tiles.dim(0), layer.c_out, n, n);
  LayerSimResult res;
  res.report.multipliers = cfg.multipliers();

  for (std::size_t j0 = 0; j0 < set.c_out; j0 += c) {
    const std::size_t j1 = std::min(j0 + c, set.c_out);
    for (std::size_t i0 = 0; i0 < set.c_in; i0 += c) {
      const std::size_t i1 = std::min(i0 + c, set.c_in);
      const auto sched = schedule_kernel_tile(kernel_subset(set, j0, j1, i0, i1), cfg.P_o, cfg.R);
      ComplexTensor act(cfg.b, i1 - i0, n, n);
      for (std::size_t pos = 0; pos < positions; ++pos) {
        for (std::size_t img = 0; img < cfg.b; ++img)
          for (std::size_t i = i0; i < i1; ++i) {
            const auto src = x_tiles.map(img * positions + pos, i);
            std::copy(src.begin(), src.end(), act.map(img, i - i0).begin());
          }
        const auto rep = simulate_tile(sched, act, cfg, mode);
        res.report.accumulate(rep);
        if (mode != SimMode::functional) continue;
        for (std::size_t img = 0; img < cfg.b; ++img)
          for (std::size_t j = j0; j < j1; ++j) {
            const auto src = rep.outputs.map(img, j - j0);
            auto dst = y_tiles.map(img * positions + pos, j);
            for (std::size_t u = 0; u < n * n; ++u) dst[u] += src[u];
          }
      }
    }
  }
  if (mode == SimMode::functional) res.output = assemble_output(y_tiles, layer, h);
  return res;
}

struct SweepRow {
  std::size_t P_o = 0;
  std::size_t R = 0;
  double alpha = 0.0;
  double utilization = 0.0;  // measured 1 / lambda-bar
  std::uint64_t cycles = 0;  // one activation tile per layer, one lane
};

// Measures 1/lambda-bar for every (P_o, R) with R <= P_o by replaying every
// layer's schedule over one activation tile.
inline std::vector<SweepRow> utilization_sweep(std::span<const SparseSpectralKernelSet> layers,
                                               std::span<const std::size_t> P_o_list,
                                               std::span<const std::size_t> R_list) {
  detail::require<FormatError>(!layers.empty(), "utilization_sweep: no kernel layers");
  std::vector<SweepRow> rows;
  for (std::size_t P_o : P_o_list)
    for (std::size_t R : R_list) {
      if (R > P_o) continue;
      SimReport total;
      for (const auto& set : layers) {
        const SimConfig cfg{.P_b = 1, .P_o = P_o, .R = R, .c = std::max(set.c_out, set.c_in),
                            .n = set.n, .b = 1};
        const auto sched = schedule_kernel_tile(set, P_o, R);
        const ComplexTensor act(1, set.c_in, set.n, set.n);
        total.accumulate(simulate_tile(sched, act, cfg, SimMode::timing_only));
      }
      rows.push_back({P_o, R, layers.front().alpha(), total.lambda_utilization(), total.cycles});
    }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "P_o,R,alpha,utilization,cycles\n";
  for (const auto& r : rows)
    out << r.P_o << ',' << r.R << ',' << r.alpha << ',' << r.utilization << ',' << r.cycles << '\n';
}

}  // namespace sparsespec
