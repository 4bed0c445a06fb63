#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cf {

// Mismatched tensor extents, rank, or axis arguments.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An API was called outside its documented protocol (wrong tape, missing
// gradients, non-scalar loss, ...). These indicate caller bugs, not bad data.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Invalid user-facing configuration: files, keys, hyperparameter ranges.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A loss or score became non-finite during training. Carries the position so
// the harness can report where the run diverged.
struct NumericError : std::runtime_error {
  NumericError(std::size_t epoch_, std::size_t step_, const std::string& what_)
      : std::runtime_error("non-finite value at epoch " + std::to_string(epoch_) +
                           ", step " + std::to_string(step_) + ": " + what_),
        epoch(epoch_),
        step(step_) {}

  std::size_t epoch;
  std::size_t step;
};

}  // namespace cf
