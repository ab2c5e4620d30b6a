#pragma once

// Dense toy-model file (little-endian):
//   "TOY1"  u32 input, u32 c1, u32 c2, u32 h_krn, u32 n, u32 classes
//   every real scalar in ToyParams::for_each order as f64

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "sparsespec/admm/model.hpp"
#include "sparsespec/serialize.hpp"

namespace sparsespec::admm {

inline std::vector<std::uint8_t> serialize_params(const ToyModelSpec& s, const ToyParams& p) {
  sparsespec::detail::ByteWriter w;
  w.magic("TOY1");
  for (std::size_t v : {s.input, s.c1, s.c2, s.h_krn, s.n, s.classes}) w.u32_checked(v, "model dim");
  auto copy = p;
  copy.for_each([&](double& v, ToyParams::Class) { w.f64(v); });
  return std::move(w.bytes());
}

inline std::pair<ToyModelSpec, ToyParams> deserialize_params(std::span<const std::uint8_t> bytes) {
  sparsespec::detail::ByteReader r(bytes);
  r.expect_magic("TOY1");
  ToyModelSpec s;
  for (std::size_t* v : {&s.input, &s.c1, &s.c2, &s.h_krn, &s.n, &s.classes}) *v = r.u32();
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model header: ") + e.what());
  }
  auto p = ToyParams::zeros(s);
  std::size_t scalars = 0;
  p.for_each([&](double&, ToyParams::Class) { ++scalars; });
  r.need(std::uint64_t(scalars) * 8, "model parameters");
  p.for_each([&](double& v, ToyParams::Class) { v = r.f64(); });
  sparsespec::detail::require<FormatError>(r.done(), "trailing bytes after model parameters");
  return {s, std::move(p)};
}

inline void save_params(const std::filesystem::path& path, const ToyModelSpec& s,
                        const ToyParams& p) {
  sparsespec::detail::write_file(path, serialize_params(s, p));
}

inline std::pair<ToyModelSpec, ToyParams> load_params(const std::filesystem::path& path) {
  try {
    return deserialize_params(sparsespec::detail::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace sparsespec::admm
