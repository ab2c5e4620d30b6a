#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sparsespec/error.hpp"
#include "sparsespec/fft.hpp"
#include "sparsespec/tensor.hpp"

namespace sparsespec {

// k = floor(n^2 / alpha): the number of entries every pruned n x n map keeps.
inline std::size_t nonzeros_per_map(std::size_t n, double alpha) {
  detail::require<ConfigError>(std::isfinite(alpha) && alpha >= 1.0,
                               "pruning rate alpha must be >= 1, got " + std::to_string(alpha));
  const double exact = double(n * n) / alpha;
  // Guard against representation error pushing e.g. 16.0 down to 15.999...
  return static_cast<std::size_t>(std::floor(exact + 1e-9));
}

// ---------------------------------------------------------------------------
// Top-k magnitude projection
// ---------------------------------------------------------------------------

// Flat indices of the k entries of largest modulus, in ascending index order.
// Equal moduli are resolved in favour of the lower flat index.
inline std::vector<std::uint32_t> topk_indices(std::span<const Complex> map, std::size_t k) {
  detail::require<ConfigError>(k <= map.size(), "project_topk: k = " + std::to_string(k) +
                                                    " exceeds map size " +
                                                    std::to_string(map.size()));
  std::vector<std::uint32_t> order(map.size());
  std::iota(order.begin(), order.end(), 0u);
  std::vector<double> mod(map.size());
  for (std::size_t u = 0; u < map.size(); ++u) mod[u] = std::abs(map[u]);
  const auto by_modulus = [&](std::uint32_t a, std::uint32_t b) {
    return mod[a] != mod[b] ? mod[a] > mod[b] : a < b;
  };
  std::nth_element(order.begin(), order.begin() + std::ptrdiff_t(k), order.end(), by_modulus);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

// Keeps the k largest-modulus entries and zeroes the rest.
inline SpectralMap project_topk(std::span<const Complex> map, std::size_t k) {
  SpectralMap out(map.size());
  for (auto u : topk_indices(map, k)) out[u] = map[u];
  return out;
}

// Applies project_topk to every (d0, d1) map of a tensor.
inline ComplexTensor project_topk(const ComplexTensor& t, std::size_t k) {
  ComplexTensor out(t.shape());
  for (std::size_t a = 0; a < t.dim(0); ++a)
    for (std::size_t b = 0; b < t.dim(1); ++b) {
      const auto src = t.map(a, b);
      auto dst = out.map(a, b);
      for (auto u : topk_indices(src, k)) dst[u] = src[u];
    }
  return out;
}

// ---------------------------------------------------------------------------
// Sparse kernel set
// ---------------------------------------------------------------------------

// One pruned n x n kernel map: flat indices (strictly increasing) and values.
struct SparseMap {
  std::vector<std::uint32_t> index;
  std::vector<Complex> value;

  [[nodiscard]] std::size_t nnz() const noexcept { return index.size(); }
  friend bool operator==(const SparseMap&, const SparseMap&) = default;
};

inline SparseMap sparsify_topk(std::span<const Complex> map, std::size_t k) {
  SparseMap s;
  s.index = topk_indices(map, k);
  s.value.reserve(k);
  for (auto u : s.index) s.value.push_back(map[u]);
  return s;
}

// Pruned spectral kernels of one layer. Every (j, i) map stores exactly k
// entries; maps are kept in row-major (j, i) order.
struct SparseSpectralKernelSet {
  std::size_t c_out = 0;
  std::size_t c_in = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<SparseMap> maps;

  [[nodiscard]] const SparseMap& map(std::size_t j, std::size_t i) const {
    return maps[j * c_in + i];
  }
  SparseMap& map(std::size_t j, std::size_t i) { return maps[j * c_in + i]; }

  // Pruning rate implied by the stored density.
  [[nodiscard]] double alpha() const noexcept { return k ? double(n * n) / double(k) : 0.0; }

  // Throws FormatError describing the first broken invariant.
  void validate() const {
    using detail::require;
    require<FormatError>(c_out >= 1 && c_in >= 1 && n >= 1, "kernel set: empty dimensions");
    require<FormatError>(k <= n * n, "kernel set: k exceeds n^2");
    require<FormatError>(maps.size() == c_out * c_in,
                         "kernel set: expected " + std::to_string(c_out * c_in) + " maps, found " +
                             std::to_string(maps.size()));
    for (std::size_t m = 0; m < maps.size(); ++m) {
      const auto& s = maps[m];
      const std::string where =
          "kernel set map (j=" + std::to_string(m / c_in) + ", i=" + std::to_string(m % c_in) + ")";
      require<FormatError>(s.index.size() == k && s.value.size() == k,
                           where + ": holds " + std::to_string(s.index.size()) +
                               " entries, expected exactly " + std::to_string(k));
      for (std::size_t e = 0; e < k; ++e) {
        require<FormatError>(s.index[e] < n * n, where + ": index " + std::to_string(s.index[e]) +
                                                     " out of range");
        require<FormatError>(e == 0 || s.index[e] > s.index[e - 1],
                             where + ": indices not strictly increasing at entry " +
                                 std::to_string(e));
        require<FormatError>(std::isfinite(s.value[e].real()) && std::isfinite(s.value[e].imag()),
                             where + ": non-finite value at entry " + std::to_string(e));
      }
    }
  }

  [[nodiscard]] ComplexTensor to_dense() const {
    ComplexTensor out(c_out, c_in, n, n);
    for (std::size_t j = 0; j < c_out; ++j)
      for (std::size_t i = 0; i < c_in; ++i) {
        auto dst = out.map(j, i);
        const auto& s = map(j, i);
        for (std::size_t e = 0; e < s.nnz(); ++e) dst[s.index[e]] = s.value[e];
      }
    return out;
  }

  // Per-map top-k of dense spectral kernels (c_out, c_in, n, n).
  static SparseSpectralKernelSet from_dense(const ComplexTensor& w, std::size_t k) {
    detail::require<DimensionError>(w.dim(2) == w.dim(3), "from_dense: maps must be square");
    SparseSpectralKernelSet s{w.dim(0), w.dim(1), w.dim(2), k, {}};
    s.maps.reserve(w.dim(0) * w.dim(1));
    for (std::size_t j = 0; j < w.dim(0); ++j)
      for (std::size_t i = 0; i < w.dim(1); ++i) s.maps.push_back(sparsify_topk(w.map(j, i), k));
    return s;
  }

  friend bool operator==(const SparseSpectralKernelSet&, const SparseSpectralKernelSet&) = default;
};

// ---------------------------------------------------------------------------
// Request-grouping schedule
// ---------------------------------------------------------------------------

// One value-table row of one multiplier.
struct ValueEntry {
  Complex value{};
  std::uint8_t sel = 0;
  std::uint8_t valid = 0;
  friend bool operator==(const ValueEntry&, const ValueEntry&) = default;
};

// Hardware tables for one group: the P_o multipliers that share input
// channel i.
//
// At lockstep step s every multiplier needs its s-th non-zero. The Q_s unique
// addresses of that step are packed R per index-table row, so the step takes
// ceil(Q_s / R) rows (one row per cycle). A multiplier is valid in exactly
// one of those rows and reads replica `sel` of it.
struct ScheduledTables {
  std::size_t P_o = 0;
  std::size_t R = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> index_table;            // rows x R
  std::vector<std::vector<ValueEntry>> value_tables;  // P_o x rows
  std::vector<std::uint32_t> step_unique;             // Q_s per step, size k

  [[nodiscard]] std::size_t rows() const noexcept { return R ? index_table.size() / R : 0; }
  [[nodiscard]] std::uint32_t address(std::size_t row, std::size_t col) const {
    return index_table[row * R + col];
  }
  // lambda = rows / k, the stall overhead of this group.
  [[nodiscard]] double lambda() const noexcept { return k ? double(rows()) / double(k) : 1.0; }

  // Throws FormatError if the tables break a scheduling invariant.
  void validate() const {
    using detail::require;
    require<FormatError>(P_o >= 1 && R >= 1 && R <= P_o, "tables: need 1 <= R <= P_o");
    require<FormatError>(index_table.size() % R == 0, "tables: ragged index table");
    require<FormatError>(value_tables.size() == P_o, "tables: expected one value table per multiplier");
    std::size_t expected_rows = 0;
    for (auto q : step_unique) expected_rows += (q + R - 1) / R;
    require<FormatError>(step_unique.size() == k && expected_rows == rows(),
                         "tables: row count " + std::to_string(rows()) +
                             " differs from sum of ceil(Q_s/R) = " + std::to_string(expected_rows));
    for (std::size_t p = 0; p < P_o; ++p) {
      const auto& vt = value_tables[p];
      require<FormatError>(vt.size() == rows(), "tables: value table of multiplier " +
                                                    std::to_string(p) + " has wrong length");
      std::size_t valid = 0;
      for (const auto& e : vt) {
        require<FormatError>(e.sel < R, "tables: sel " + std::to_string(e.sel) + " >= R");
        require<FormatError>(e.valid <= 1, "tables: valid bit must be 0 or 1");
        valid += e.valid;
      }
      require<FormatError>(valid == k, "tables: multiplier " + std::to_string(p) + " has " +
                                           std::to_string(valid) + " valid rows, expected " +
                                           std::to_string(k));
    }
  }

  friend bool operator==(const ScheduledTables&, const ScheduledTables&) = default;
};

namespace detail {

inline void check_group(std::span<const SparseMap* const> group, std::size_t R) {
  require<FormatError>(!group.empty(), "schedule: empty group");
  require<ConfigError>(R >= 1 && R <= group.size(),
                       "schedule: need 1 <= R <= P_o, got R = " + std::to_string(R) +
                           ", P_o = " + std::to_string(group.size()));
  require<ConfigError>(R <= 256, "schedule: sel is 8 bits, R must be <= 256");
  const std::size_t k = group.front()->nnz();
  for (const auto* m : group)
    require<FormatError>(m->nnz() == k, "schedule: unequal non-zero counts in group (" +
                                            std::to_string(m->nnz()) + " vs " +
                                            std::to_string(k) + ")");
}

// Q_s for every lockstep step of the group.
inline std::vector<std::uint32_t> step_unique_counts(std::span<const SparseMap* const> group) {
  const std::size_t k = group.front()->nnz();
  std::vector<std::uint32_t> q(k);
  std::vector<std::uint32_t> addr(group.size());
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t p = 0; p < group.size(); ++p) addr[p] = group[p]->index[s];
    std::sort(addr.begin(), addr.end());
    q[s] = std::uint32_t(std::unique(addr.begin(), addr.end()) - addr.begin());
  }
  return q;
}

}  // namespace detail

inline ScheduledTables build_group_schedule(std::span<const SparseMap* const> group,
                                            std::size_t R) {
  detail::check_group(group, R);
  const std::size_t P_o = group.size(), k = group.front()->nnz();
  ScheduledTables t{P_o, R, k, {}, std::vector<std::vector<ValueEntry>>(P_o), {}};
  t.step_unique.reserve(k);

  std::vector<std::uint32_t> uniq(P_o);
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t p = 0; p < P_o; ++p) uniq[p] = group[p]->index[s];
    std::sort(uniq.begin(), uniq.end());
    const std::size_t Q = std::size_t(std::unique(uniq.begin(), uniq.end()) - uniq.begin());
    t.step_unique.push_back(std::uint32_t(Q));

    const std::size_t step_rows = (Q + R - 1) / R;
    for (std::size_t r = 0; r < step_rows; ++r)
      for (std::size_t c = 0; c < R; ++c) {
        // Short final rows repeat the last unique address.
        const std::size_t u = std::min(r * R + c, Q - 1);
        t.index_table.push_back(uniq[u]);
      }
    for (std::size_t p = 0; p < P_o; ++p) {
      const std::uint32_t a = group[p]->index[s];
      const auto hit = std::lower_bound(uniq.begin(), uniq.begin() + std::ptrdiff_t(Q), a);
      const auto u = std::size_t(hit - uniq.begin());
      for (std::size_t r = 0; r < step_rows; ++r) {
        if (r == u / R)
          t.value_tables[p].push_back({group[p]->value[s], std::uint8_t(u % R), 1});
        else
          t.value_tables[p].push_back({});
      }
    }
  }
  return t;
}

inline ScheduledTables build_group_schedule(std::span<const SparseMap> group, std::size_t R) {
  std::vector<const SparseMap*> ptrs;
  ptrs.reserve(group.size());
  for (const auto& m : group) ptrs.push_back(&m);
  return build_group_schedule(std::span<const SparseMap* const>(ptrs), R);
}

// Output channels [g*P_o, (g+1)*P_o) of input channel i. A short final group
// is padded by repeating its last map; padding adds no unique addresses.
inline std::vector<const SparseMap*> output_group(const SparseSpectralKernelSet& set,
                                                  std::size_t i, std::size_t g,
                                                  std::size_t P_o) {
  std::vector<const SparseMap*> group;
  group.reserve(P_o);
  for (std::size_t p = 0; p < P_o; ++p) {
    const std::size_t j = std::min(g * P_o + p, set.c_out - 1);
    group.push_back(&set.map(j, i));
  }
  return group;
}

inline std::size_t group_count(std::size_t c_out, std::size_t P_o) {
  return (c_out + P_o - 1) / P_o;
}

struct GroupScheduleStats {
  std::size_t P_o = 0;
  std::size_t R = 0;
  std::vector<double> lambda;                  // per (i, group), i-major
  double mean_lambda = 1.0;                    // lambda-bar_R
  std::uint64_t total_rows = 0;                // sum over groups of sum_s ceil(Q_s/R)
  std::map<std::uint32_t, std::uint64_t> q_histogram;  // Q_s -> occurrences

  [[nodiscard]] double utilization() const noexcept { return 1.0 / mean_lambda; }
};

inline GroupScheduleStats lambda_stats(const SparseSpectralKernelSet& set, std::size_t P_o,
                                       std::size_t R) {
  detail::require<FormatError>(!set.maps.empty() && set.c_out >= 1 && set.c_in >= 1,
                               "lambda_stats: empty kernel set");
  detail::require<FormatError>(set.k >= 1, "lambda_stats: kernel maps hold no non-zeros");
  detail::require<ConfigError>(P_o >= 1 && R >= 1 && R <= P_o,
                               "lambda_stats: need 1 <= R <= P_o");
  GroupScheduleStats st{P_o, R, {}, 1.0, 0, {}};
  const std::size_t G = group_count(set.c_out, P_o);
  double sum = 0.0;
  for (std::size_t i = 0; i < set.c_in; ++i)
    for (std::size_t g = 0; g < G; ++g) {
      const auto group = output_group(set, i, g, P_o);
      detail::check_group(group, R);
      std::uint64_t rows = 0;
      for (auto q : detail::step_unique_counts(group)) {
        rows += (q + R - 1) / R;
        ++st.q_histogram[q];
      }
      st.total_rows += rows;
      st.lambda.push_back(double(rows) / double(set.k));
      sum += st.lambda.back();
    }
  st.mean_lambda = sum / double(st.lambda.size());
  return st;
}

}  // namespace sparsespec
