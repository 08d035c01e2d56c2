#pragma once

#include <stdexcept>
#include <string>

namespace kdistill {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Input sequence exceeds the model's context window.
struct SequenceTooLongError : Error {
  using Error::Error;
};

// Entity token sequence does not occur in a continuation.
struct EntityNotFoundError : Error {
  using Error::Error;
};

// Non-finite loss or gradient; carries the offending step.
struct NumericalError : Error {
  explicit NumericalError(const std::string& what, long step = -1)
      : Error(what), step(step) {}
  long step;
};

// Every continuation of an edit was skipped; no update happened.
struct EditFailedError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

struct NotImplementedError : Error {
  using Error::Error;
};

// Missing upstream artifact (checkpoint, world bundle, transfer file).
struct MissingArtifactError : Error {
  using Error::Error;
};

}  // namespace kdistill
