#pragma once

#include <set>
#include <string>
#include <vector>

#include "emoflow/harness/artifacts.hpp"
#include "emoflow/harness/metrics.hpp"

namespace emoflow::harness {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  double budget = 0.0;  // wall-clock limit in seconds, 0 when none applies
};

struct AcceptanceOptions {
  RunConfig config;
  std::string out_dir;  // dumps, metrics and the result table go here
  std::set<int> only;   // empty: all twelve
  Progress log;
};

struct AcceptanceOutcome {
  std::vector<CriterionResult> results;
  MetricsReport report;
  bool all_passed() const;
};

inline constexpr int kCriteria = 12;

/// Runs the acceptance criteria in order, training what they need from the
/// config. Exceptions inside one criterion mark it failed with the message
/// and the rest still run.
AcceptanceOutcome run_acceptance(const AcceptanceOptions& options);

/// "[PASS] 5 title: detail (12.3 s)"
std::string format_result(const CriterionResult& r);

}  // namespace emoflow::harness
