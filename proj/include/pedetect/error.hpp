#pragma once

#include <stdexcept>
#include <string>

namespace pedetect {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  ok = 0,
  config = 2,
  data = 3,
  artifact_mismatch = 4,
};

/// Base of every error the library raises on purpose. Each category maps to
/// one CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Invalid parameters, out-of-range hyperparameters, bad CLI input.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::config, what) {}
};

/// Malformed or semantically invalid data (dimension mismatch, single-class
/// labels, corrupted files).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::data, what) {}
};

/// Artifacts that were produced by incompatible pipeline runs.
class ArtifactMismatch : public Error {
 public:
  explicit ArtifactMismatch(const std::string& what)
      : Error(ExitCode::artifact_mismatch, what) {}
};

}  // namespace pedetect
