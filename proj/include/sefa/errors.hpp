#pragma once

#include <stdexcept>
#include <string>

namespace sefa {

// Error taxonomy shared across the library. The command-line tool maps
// InvalidArgumentError / ValidationError / ParseError / VersionError /
// StateError to exit code 1 and runtime failures (TrainingDivergence,
// IntegrationFailure, I/O trouble) to exit code 2.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition.
struct InvalidArgumentError : Error {
  using Error::Error;
};

// An object was used before it was fitted/initialized, or after it ended.
struct StateError : Error {
  using Error::Error;
};

// Malformed input file; the message names the offending line.
struct ParseError : Error {
  using Error::Error;
};

// Structurally valid input that violates a documented invariant.
struct ValidationError : Error {
  using Error::Error;
};

// A persisted document declares an unsupported format version.
struct VersionError : Error {
  using Error::Error;
};

// Training produced a non-finite loss or gradient; message has the step.
struct TrainingDivergence : Error {
  using Error::Error;
};

// An ODE integration left the finite domain or exhausted its step budget.
struct IntegrationFailure : Error {
  using Error::Error;
};

}  // namespace sefa
