#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace igan {

// Scalar used by tensors and training math. Defaults to float; define
// IGAN_SCALAR_DOUBLE to build the whole stack in double precision (used by
// the high-precision gradient checks). Evaluation statistics always run in
// double regardless of this choice.
#ifdef IGAN_SCALAR_DOUBLE
using Real = double;
#else
using Real = float;
#endif

// Failure categories. The CLI maps these one-to-one onto process exit codes,
// so every error thrown anywhere in the library carries one.
enum class ErrorKind : int {
  usage = 1,    // bad flags, malformed config, invalid option combinations
  data = 2,     // unreadable/ill-formed datasets, unsatisfiable constraints
  numeric = 3,  // non-finite losses, domain errors, shape mismatches
  io = 4,       // filesystem failures, corrupt checkpoints
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::data: return "data";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

// Small helper so call sites can write
//   fail(ErrorKind::data, "expected ", n, " items, got ", m);
template <class... Parts>
[[noreturn]] inline void fail(ErrorKind kind, Parts&&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw Error(kind, os.str());
}

template <class... Parts>
inline void check(bool ok, ErrorKind kind, Parts&&... parts) {
  if (!ok) fail(kind, std::forward<Parts>(parts)...);
}

}  // namespace igan
