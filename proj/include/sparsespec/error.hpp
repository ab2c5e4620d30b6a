#pragma once

#include <stdexcept>
#include <string>

namespace sparsespec {

// Base for every error raised by the library. Subclasses name the contract
// that was violated so callers (and the CLI exit-code mapping) can tell
// usage problems from data problems.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FFT size or tile geometry is not representable.
class SizeError : public Error {
 public:
  using Error::Error;
};

// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed sparse kernels, tables or files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Bad parameters or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// No design point satisfies the resource constraints.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <class E = Error>
inline void require(bool ok, const std::string& what) {
  if (!ok) throw E(what);
}

}  // namespace detail
}  // namespace sparsespec
