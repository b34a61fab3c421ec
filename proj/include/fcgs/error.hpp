#pragma once

#include <stdexcept>
#include <string>

namespace fcgs {

// Error categories. The CLI maps them onto process exit codes.
enum class ErrorKind {
  Format,         // malformed input file (PLY header, container magic, ...)
  Schema,         // required fields missing
  Truncation,     // input shorter than its declared size
  Serialization,  // value cannot be written (non-finite, out of float range)
  Weights,        // weights container invalid (version, shapes, steps)
  Fingerprint,    // container was produced with different weights
  Corruption,     // bitstream inconsistent with its own structure
  InvalidArgument,
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Format: return "format error";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Truncation: return "truncation error";
    case ErrorKind::Serialization: return "serialization error";
    case ErrorKind::Weights: return "weights error";
    case ErrorKind::Fingerprint: return "fingerprint mismatch";
    case ErrorKind::Corruption: return "corruption error";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Internal: return "internal error";
  }
  return "error";
}

}  // namespace fcgs
