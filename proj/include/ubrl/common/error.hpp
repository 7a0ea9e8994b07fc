#pragma once

#include <stdexcept>
#include <string>

namespace ubrl {

/// Invalid or inconsistent configuration (bad geometry, unknown keys, bad ranges).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A trajectory handed to the simulator that cannot be executed.
struct MalformedAction : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// World point too far from a reference path to have a Frenet projection.
struct OutOfCorridor : std::domain_error {
  using std::domain_error::domain_error;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Caller broke a documented precondition (shape mismatch and similar).
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

/// Replay buffer holds fewer items than requested.
struct NotReady : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ubrl
