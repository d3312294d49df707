#pragma once

#include <stdexcept>
#include <string>

namespace cevo {

/// Invalid configuration or shape mismatch detected before any work is done.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operation called in the wrong lifecycle state (backward before forward,
/// best before tell, step after done, ...).
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values encountered while updating parameters.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unrecoverable numerical failure (e.g. eigendecomposition of a broken
/// covariance matrix).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated binary file.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A policy callback failed mid-episode; the message carries seed and frame.
struct EpisodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cevo
