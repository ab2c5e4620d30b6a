#pragma once

// Binary formats (all integers little-endian, f64 as IEEE-754 bit patterns):
//
// Kernel file
//   "SPK1"  u32 layer_count
//   per layer: u32 c_out, u32 c_in, u32 n, u32 k
//              per (j, i) in row-major order: k x (u32 flat_index, f64 re, f64 im)
//
// Scheduled-table record (a file holds one or more records back to back)
//   "SPT1"  u32 P_o, u32 R, u32 rows
//   index table: rows x R u32
//   per multiplier: rows x (f64 re, f64 im, u8 sel, u8 valid)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparsespec/error.hpp"
#include "sparsespec/sparse_format.hpp"

namespace sparsespec {

namespace detail {

class ByteWriter {
 public:
  void magic(std::string_view m) { out_.insert(out_.end(), m.begin(), m.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out_.push_back(std::uint8_t(v >> (8 * b)));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out_.push_back(std::uint8_t(v >> (8 * b)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void u32_checked(std::size_t v, const char* what) {
    require<FormatError>(v <= 0xFFFFFFFFu, std::string(what) + " does not fit in u32");
    u32(std::uint32_t(v));
  }

  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  [[nodiscard]] bool done() const noexcept { return pos_ == in_.size(); }
  [[nodiscard]] std::size_t offset() const noexcept { return pos_; }

  void expect_magic(std::string_view m) {
    need(m.size(), "magic");
    const std::string_view got(reinterpret_cast<const char*>(in_.data() + pos_), m.size());
    require<FormatError>(got == m, "bad magic at byte " + std::to_string(pos_) + ": expected \"" +
                                       std::string(m) + "\"");
    pos_ += m.size();
  }
  std::uint8_t u8() {
    need(1, "u8");
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(in_[pos_++]) << (8 * b);
    return v;
  }
  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t(in_[pos_++]) << (8 * b);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  // Fails early when a declared payload is longer than what remains.
  void need(std::uint64_t bytes, const std::string& what) const {
    require<FormatError>(bytes <= in_.size() - pos_,
                         "truncated input reading " + what + " at byte " + std::to_string(pos_));
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require<FormatError>(bool(f), "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  require<FormatError>(bool(f), "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  require<FormatError>(bool(f), "write failed for " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Kernel files
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> serialize_kernels(std::span<const SparseSpectralKernelSet> layers) {
  detail::ByteWriter w;
  w.magic("SPK1");
  w.u32_checked(layers.size(), "layer count");
  for (const auto& l : layers) {
    l.validate();
    w.u32_checked(l.c_out, "c_out");
    w.u32_checked(l.c_in, "c_in");
    w.u32_checked(l.n, "n");
    w.u32_checked(l.k, "k");
    for (const auto& m : l.maps)
      for (std::size_t e = 0; e < l.k; ++e) {
        w.u32(m.index[e]);
        w.f64(m.value[e].real());
        w.f64(m.value[e].imag());
      }
  }
  return std::move(w.bytes());
}

inline std::vector<SparseSpectralKernelSet> deserialize_kernels(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic("SPK1");
  const std::uint32_t count = r.u32();
  std::vector<SparseSpectralKernelSet> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    SparseSpectralKernelSet s;
    s.c_out = r.u32();
    s.c_in = r.u32();
    s.n = r.u32();
    s.k = r.u32();
    detail::require<FormatError>(s.c_out >= 1 && s.c_in >= 1 && s.n >= 1 && s.k >= 1,
                                 "layer " + std::to_string(l) + ": zero dimension in header");
    const std::uint64_t entries = std::uint64_t(s.c_out) * s.c_in * s.k;
    r.need(entries * 20, "layer " + std::to_string(l) + " payload");
    s.maps.resize(s.c_out * s.c_in);
    for (auto& m : s.maps) {
      m.index.resize(s.k);
      m.value.resize(s.k);
      for (std::size_t e = 0; e < s.k; ++e) {
        m.index[e] = r.u32();
        const double re = r.f64();
        m.value[e] = {re, r.f64()};
      }
    }
    try {
      s.validate();
    } catch (const FormatError& e) {
      throw FormatError("layer " + std::to_string(l) + ": " + e.what());
    }
    layers.push_back(std::move(s));
  }
  detail::require<FormatError>(r.done(), "trailing bytes after last layer at byte " +
                                             std::to_string(r.offset()));
  return layers;
}

inline void save_kernels(const std::filesystem::path& path,
                         std::span<const SparseSpectralKernelSet> layers) {
  detail::write_file(path, serialize_kernels(layers));
}

inline std::vector<SparseSpectralKernelSet> load_kernels(const std::filesystem::path& path) {
  try {
    return deserialize_kernels(detail::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Scheduled tables
// ---------------------------------------------------------------------------

namespace detail {

inline void write_tables(ByteWriter& w, const ScheduledTables& t) {
  t.validate();
  w.magic("SPT1");
  w.u32_checked(t.P_o, "P_o");
  w.u32_checked(t.R, "R");
  w.u32_checked(t.rows(), "rows");
  for (auto a : t.index_table) w.u32(a);
  for (const auto& vt : t.value_tables)
    for (const auto& e : vt) {
      w.f64(e.value.real());
      w.f64(e.value.imag());
      w.u8(e.sel);
      w.u8(e.valid);
    }
}

// Step boundaries are not stored. Every multiplier is valid exactly once per
// step and the last row of a step always holds some multiplier's address, so
// a step ends at the first row where every multiplier has been served.
inline void recover_steps(ScheduledTables& t) {
  t.step_unique.clear();
  std::vector<std::uint8_t> served(t.P_o, 0);
  std::size_t pending = t.P_o;
  std::vector<std::uint32_t> addrs;
  for (std::size_t row = 0; row < t.rows(); ++row) {
    for (std::size_t p = 0; p < t.P_o; ++p) {
      const auto& e = t.value_tables[p][row];
      if (!e.valid) continue;
      require<FormatError>(e.sel < t.R, "tables: sel " + std::to_string(e.sel) + " >= R");
      require<FormatError>(!served[p], "tables: multiplier " + std::to_string(p) +
                                           " valid twice in one step at row " +
                                           std::to_string(row));
      served[p] = 1;
      --pending;
      addrs.push_back(t.address(row, e.sel));
    }
    if (pending == 0) {
      std::sort(addrs.begin(), addrs.end());
      t.step_unique.push_back(
          std::uint32_t(std::unique(addrs.begin(), addrs.end()) - addrs.begin()));
      addrs.clear();
      std::fill(served.begin(), served.end(), 0);
      pending = t.P_o;
    }
  }
  require<FormatError>(pending == t.P_o, "tables: final step is incomplete");
  t.k = t.step_unique.size();
}

inline ScheduledTables read_tables(ByteReader& r) {
  r.expect_magic("SPT1");
  ScheduledTables t;
  t.P_o = r.u32();
  t.R = r.u32();
  const std::uint32_t rows = r.u32();
  require<FormatError>(t.P_o >= 1 && t.R >= 1 && t.R <= t.P_o, "tables: need 1 <= R <= P_o");
  const std::uint64_t payload = std::uint64_t(rows) * t.R * 4 + std::uint64_t(rows) * t.P_o * 18;
  r.need(payload, "table payload");
  t.index_table.resize(std::size_t(rows) * t.R);
  for (auto& a : t.index_table) a = r.u32();
  t.value_tables.assign(t.P_o, std::vector<ValueEntry>(rows));
  for (auto& vt : t.value_tables)
    for (auto& e : vt) {
      const double re = r.f64();
      e.value = {re, r.f64()};
      e.sel = r.u8();
      e.valid = r.u8();
    }
  recover_steps(t);
  t.validate();
  return t;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_tables(std::span<const ScheduledTables> records) {
  detail::ByteWriter w;
  for (const auto& t : records) detail::write_tables(w, t);
  return std::move(w.bytes());
}

inline std::vector<ScheduledTables> deserialize_tables(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  std::vector<ScheduledTables> out;
  do {
    try {
      out.push_back(detail::read_tables(r));
    } catch (const FormatError& e) {
      throw FormatError("table record " + std::to_string(out.size()) + ": " + e.what());
    }
  } while (!r.done());
  return out;
}

inline void save_tables(const std::filesystem::path& path, std::span<const ScheduledTables> records) {
  detail::write_file(path, serialize_tables(records));
}

inline std::vector<ScheduledTables> load_tables(const std::filesystem::path& path) {
  return deserialize_tables(detail::read_file(path));
}

}  // namespace sparsespec
