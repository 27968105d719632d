#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rotary/cost_model.hpp"
#include "rotary/workloads.hpp"

namespace rotary {

enum class Outcome { completed, initialization_failure };

struct RunReport {
  std::string scenario_digest;
  std::string trace_digest;
  PolicyName policy = PolicyName::lru;
  Metrics metrics;
  std::vector<StepRecord> timeline;
  Outcome outcome = Outcome::completed;
  FeasibilityReport feasibility;
};

/// Feasibility gate, then per token: controller/policy plan, prefetch loads,
/// demand accesses in ascending id order, cost accounting. Deterministic for
/// a given (cfg, trace). Throws Error(invalid_scenario) when the trace does
/// not fit the layout or slot geometry.
RunReport run(const ScenarioConfig& cfg, const Trace& trace);

struct ComparisonReport {
  std::string trace_digest;
  std::vector<RunReport> runs;  // in the order the policies were given
};

/// Runs every policy on the same trace and seed. With `parallel` the runs fan
/// out over threads; the report is identical either way.
ComparisonReport compare(const ScenarioConfig& base, std::span<const PolicyKind> policies,
                         const Trace& trace, bool parallel = true);

struct BatchEntry {
  std::string provenance;
  std::string trace_digest;
  bool completed = false;
  bool abnormal = false;
  std::string detail;  // failure reason or internal error text
  Metrics metrics;
};

struct BatchReport {
  std::size_t total = 0;
  std::size_t completed = 0;
  std::size_t initialization_failures = 0;
  std::size_t abnormal_terminations = 0;
  double completion_rate = 0.0;  // completed / total
  bool zero_abnormal = true;
  std::vector<BatchEntry> entries;
};

/// Runs every trace; failures are counted rather than thrown. Any exception
/// escaping a run counts as an abnormal termination.
BatchReport batch(const ScenarioConfig& cfg, std::span<const Trace> traces, bool parallel = true);

std::string scenario_digest(const ScenarioConfig& cfg);
std::string trace_digest(const Trace& trace);

std::string feasibility_to_json(const FeasibilityReport& report);
std::string report_to_json(const RunReport& report, bool include_timeline = true);
std::string comparison_to_json(const ComparisonReport& report);
std::string batch_to_json(const BatchReport& report);

/// Columns: step,decision,prefetch_bytes,misses,hits,stall_s,step_s,resident_bytes
void write_timeline_csv(std::ostream& out, std::span<const StepRecord> timeline);

/// Fixed-width side-by-side table of misses, bytes, stall time, throughput.
std::string comparison_table(const ComparisonReport& report);

}  // namespace rotary
