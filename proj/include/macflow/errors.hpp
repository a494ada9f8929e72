#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace macflow {

// Scenario or argument validation failure. Carries every violated invariant,
// not just the first one found.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> issues)
      : std::runtime_error(join(issues)), issues_(std::move(issues)) {}
  explicit ValidationError(std::string issue)
      : ValidationError(std::vector<std::string>{std::move(issue)}) {}

  const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& issues) {
    std::string out = "scenario validation failed:";
    for (const auto& s : issues) {
      out += "\n  - ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> issues_;
};

// Requested data load (or boundary data) cannot be met. When the bound is
// known, max_deliverable_bits says how much could have been delivered.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& msg, std::optional<double> max_deliverable_bits = std::nullopt)
      : std::runtime_error(msg), max_deliverable_bits_(max_deliverable_bits) {}

  std::optional<double> max_deliverable_bits() const { return max_deliverable_bits_; }

 private:
  std::optional<double> max_deliverable_bits_;
};

// A rate tuple handed to the decoding-priority inversion does not lie on the
// sum-rate segment of the two-user region. Carries the relative distance.
class OffBoundaryError : public std::runtime_error {
 public:
  OffBoundaryError(const std::string& msg, double relative_distance)
      : std::runtime_error(msg), relative_distance_(relative_distance) {}

  double relative_distance() const { return relative_distance_; }

 private:
  double relative_distance_;
};

}  // namespace macflow
