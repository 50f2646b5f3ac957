#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mcl {

// Base class for everything this library throws on purpose. The CLI maps
// subclasses to process exit codes, so new error kinds should derive from
// one of the categories below rather than from Error directly.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or axis mismatch between tensors; messages name the offending axis.
struct DimensionError : Error {
  using Error::Error;
};

// API misuse a caller can always avoid (backward on a non-scalar, reading a
// scalar from a non-scalar tensor, mixing parameter sets of different
// architectures, ...).
struct ContractError : Error {
  using Error::Error;
};

// Invalid configuration: bad key, malformed value, out-of-range setting.
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem and stream failures.
struct IoError : Error {
  using Error::Error;
};

// Checkpoint parsing failures, with a machine-checkable reason.
struct CheckpointError : Error {
  enum class Kind { BadMagic, BadVersion, BadCrc, Truncated };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// Thrown by the training loop the moment any loss term stops being finite.
struct CollapseDetected : Error {
  long long iter;
  double value;
  std::string term;

  CollapseDetected(long long it, double v, std::string which)
      : Error(format(it, v, which)), iter(it), value(v), term(std::move(which)) {}

 private:
  static std::string format(long long it, double v, const std::string& which) {
    std::ostringstream os;
    os << "training collapsed at iteration " << it << ": " << which
       << " loss is " << v;
    return os.str();
  }
};

}  // namespace mcl
