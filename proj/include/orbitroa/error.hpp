#pragma once

#include <stdexcept>
#include <string>

namespace orbitroa {

/// Failure categories. `Infeasible` is a mathematical answer ("no"), the
/// others mean the computation itself broke or was misconfigured.
enum class ErrorKind {
  kInvalidArgument,
  kParse,
  kIo,
  kNumerical,
  kInfeasible,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::kInvalidArgument, what);
}

}  // namespace orbitroa
