#pragma once

#include <stdexcept>
#include <string>

namespace ranklab {

// File-format failures for datasets and checkpoints. The kind distinguishes a
// file that does not parse from one that parses but carries the wrong version
// or a bad checksum.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { malformed, version_mismatch, checksum_mismatch };

  FormatError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Raised when an optimization run produces a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int step, const std::string& what)
      : std::runtime_error(what), step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace ranklab
