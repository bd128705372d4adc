#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sheq {

// Process exit codes used by the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitNumericalAbort = 2,
  kExitIo = 3,
};

/// Bad configuration or argument values (maps to exit code 1).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values or a blown NaN budget during integration (exit code 2).
class NumericalAbort : public std::runtime_error {
 public:
  explicit NumericalAbort(const std::string& what)
      : std::runtime_error(what), sample(-1), step(-1) {}
  NumericalAbort(const std::string& what, std::int64_t sample_index, std::int64_t step_index)
      : std::runtime_error(what), sample(sample_index), step(step_index) {}

  std::int64_t sample;
  std::int64_t step;
};

/// Filesystem failures, always carrying the offending path (exit code 3).
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, const std::string& path)
      : std::runtime_error(what + ": " + path), path(path) {}

  std::string path;
};

}  // namespace sheq
