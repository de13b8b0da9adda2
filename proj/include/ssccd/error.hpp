#pragma once

#include <stdexcept>
#include <string>

namespace ssccd {

// Process exit codes for the command-line tool. The numeric values are part of
// the public interface and must not be renumbered.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kValidation = 5,
  kNumerical = 6,
  kMissingArtifact = 7,
  kInternal = 70,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::kInternal)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad or inconsistent configuration values.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kConfig) {}
};

/// File system failures: missing files, unwritable paths, truncated reads.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, ExitCode::kIo) {}
};

/// Input data violating a documented invariant (shapes, finiteness, dtype).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what, ExitCode::kValidation) {}
};

/// Degenerate numerical input (rank-0 clusters, all-zero affinities, ...).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, ExitCode::kNumerical) {}
};

/// A prerequisite artifact produced by an earlier command is absent.
class MissingArtifactError : public Error {
 public:
  explicit MissingArtifactError(const std::string& what)
      : Error(what, ExitCode::kMissingArtifact) {}
};

}  // namespace ssccd
