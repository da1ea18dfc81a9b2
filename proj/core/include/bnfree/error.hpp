#pragma once

#include <stdexcept>
#include <string>

namespace bnfree {

/// Shape or argument precondition violated by the caller.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation invoked in a state that does not support it (e.g. inference
/// with BN statistics that were never finalized).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed or corrupted file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration key or value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int epoch, int step)
      : std::runtime_error(what), epoch_(epoch), step_(step) {}
  int epoch() const { return epoch_; }
  int step() const { return step_; }

 private:
  int epoch_;
  int step_;
};

}  // namespace bnfree
