#pragma once

#include <stdexcept>
#include <string>

namespace fairforest {

/// Error categories. The C API and CLI map these onto error/exit codes.
enum class ErrorKind {
  kConfig,        // invalid configuration or hyperparameter
  kShape,         // dimension mismatch between arguments
  kDomain,        // label/group index outside its declared range
  kData,          // malformed or non-finite input data
  kNumerical,     // non-finite intermediate or failed gradient check
  kPrecondition,  // caller violated an operation's precondition
  kIo,            // file could not be opened or written
};

const char* to_string(ErrorKind kind);

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

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace fairforest
