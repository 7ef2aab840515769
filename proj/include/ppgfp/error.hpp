#pragma once

#include <stdexcept>
#include <string>

namespace ppgfp {

/// Failure categories. The C API and the CLI map these onto exit codes.
enum class ErrorKind {
  Input,      // malformed caller data (wrong length, empty stack)
  Config,     // invalid parameter value
  Dimension,  // tensor shape mismatch
  Quality,    // signal/image quality too poor to continue
  Numeric,    // non-finite value or degenerate normalization
  Data,       // dataset-level problem (missing users, too few samples)
  Metric,     // metric undefined for the given scores
  Io,         // file system or format failure
  Contract,   // internal precondition violated
  Usage,      // missing or misplaced run inputs
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const char* what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace ppgfp
