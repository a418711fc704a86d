#pragma once

#include <stdexcept>

namespace assg {

/// Malformed or truncated on-disk artifact (feature file, checkpoint, JSON).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Synthetic corpus request that cannot be satisfied.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training precondition violated or numerical breakdown.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace assg
