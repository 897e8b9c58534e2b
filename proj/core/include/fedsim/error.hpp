#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace fedsim {

enum class ErrorCode {
  kInvalidArgument,
  kLengthMismatch,
  kNonFinite,
  kOutOfRange,
  kDisconnected,
  kInfeasible,
  kBudgetExhausted,
  kNoParticipants,
  kDivergence,
  kConfig,
  kIo,
};

const char* to_string(ErrorCode code);

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when a training run produces a non-finite parameter.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t last_finite_k, const std::string& what)
      : Error(ErrorCode::kDivergence, what), last_finite_k_(last_finite_k) {}

  /// Last virtual iteration at which every parameter was still finite.
  std::size_t last_finite_k() const noexcept { return last_finite_k_; }

 private:
  std::size_t last_finite_k_;
};

/// Raised by the learning-rate guarded bound evaluators.
class InfeasibleStepError : public Error {
 public:
  InfeasibleStepError(double lhs, const std::string& what)
      : Error(ErrorCode::kInfeasible, what), lhs_(lhs) {}

  double lhs() const noexcept { return lhs_; }

 private:
  double lhs_;
};

/// Configuration failure carrying the offending field path (e.g. "run.tau").
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(ErrorCode::kConfig, path.empty() ? what : path + ": " + what),
        path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace fedsim
