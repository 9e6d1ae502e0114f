#pragma once

#include <stdexcept>
#include <string>

namespace qfl {

// Contract violations (dimension mismatch, bad spans, malformed input) are
// reported as std::invalid_argument. The types below cover the failures that
// a caller is expected to recover from.

/// A non-unitary application or post-selection left no amplitude behind.
class ImpossibleBranch : public std::runtime_error {
 public:
  explicit ImpossibleBranch(const std::string& what) : std::runtime_error(what) {}
};

/// The plus/minus shifted operators coincide, so the shift state is empty.
class DegenerateShift : public std::runtime_error {
 public:
  explicit DegenerateShift(const std::string& what) : std::runtime_error(what) {}
};

/// A training round could not proceed (for example every client dropped).
class RunFailure : public std::runtime_error {
 public:
  RunFailure(std::size_t round, const std::string& what)
      : std::runtime_error("round " + std::to_string(round) + ": " + what), round_(round) {}

  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t round_;
};

}  // namespace qfl
