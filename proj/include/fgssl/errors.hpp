#pragma once

#include <stdexcept>
#include <string>

namespace fgssl {

// Base of every error the toolkit throws. CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FGSSL_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

FGSSL_DEFINE_ERROR(DivisibilityError);
FGSSL_DEFINE_ERROR(ShapeError);
FGSSL_DEFINE_ERROR(CapacityError);
FGSSL_DEFINE_ERROR(InputError);
FGSSL_DEFINE_ERROR(StepError);
FGSSL_DEFINE_ERROR(LabelError);
FGSSL_DEFINE_ERROR(BatchTooSmall);
FGSSL_DEFINE_ERROR(MetricError);
FGSSL_DEFINE_ERROR(CheckpointError);
FGSSL_DEFINE_ERROR(StratifyError);
FGSSL_DEFINE_ERROR(ManifestError);
// Another process holds the run directory's lock file.
FGSSL_DEFINE_ERROR(RunLockedError);

// Configuration problems are usage errors (exit code 2).
FGSSL_DEFINE_ERROR(ConfigError);
// Missing or contradictory command-line inputs.
class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};
class ConfigMismatchError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class NumericsError : public Error {
 public:
  NumericsError(const std::string& what, int step)
      : Error(what + " at progressive step " + std::to_string(step)), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

#undef FGSSL_DEFINE_ERROR

}  // namespace fgssl
