#pragma once

#include <stdexcept>
#include <string>

namespace arc {

/// Operand shapes are incompatible with the operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A configuration violates a structural constraint (divisibility, ranges, unknown names).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A file on disk does not follow the expected binary or JSON layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A structural property that must hold by construction was observed broken.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Optimisation diverged. `checkpoint` names the last good snapshot on disk (may be empty).
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::string checkpoint)
      : std::runtime_error(what), checkpoint_(std::move(checkpoint)) {}
  const std::string& checkpoint() const noexcept { return checkpoint_; }

 private:
  std::string checkpoint_;
};

}  // namespace arc
