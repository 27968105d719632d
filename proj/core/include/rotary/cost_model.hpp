#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rotary/policies.hpp"
#include "rotary/residency.hpp"
#include "rotary/rotation.hpp"

namespace rotary {

struct CostParameters {
  double h2d_bandwidth = 1.0;         // bytes / second
  double per_transfer_latency = 0.0;  // seconds per issued transfer
  double compute_per_token = 1.0;     // seconds
  double overlap_factor = 0.0;        // fraction of compute that can hide transfers

  void validate() const;
};

struct MemoryModel {
  Bytes device_budget = 0;
  Bytes host_budget = 0;
  Bytes fixed_overhead = 0;
  Bytes kv_bytes_per_token = 0;
  double host_transient_factor = 1.0;

  void validate() const;
};

struct ScenarioConfig {
  ModelLayout layout;
  std::uint64_t context_length = 0;
  std::size_t host_pinned_layers = 0;
  PolicyKind policy;
  std::size_t slot_count = 1;
  Bytes per_slot_limit = 1;
  CostParameters cost;
  MemoryModel memory;
  std::uint64_t seed = 0;

  /// Throws Error(invalid_scenario) when a field is out of range.
  void validate() const;
};

/// Context-cache bytes: kv_bytes_per_token * context_length, exact.
Bytes kv_bytes(std::uint64_t context_length, const MemoryModel& mm);

enum class BudgetSide { none, device, host };

struct FeasibilityReport {
  bool feasible = true;
  BudgetSide side = BudgetSide::none;  // first violated side
  Bytes deficit = 0;                   // bytes over budget on `side`

  Bytes device_required = 0;
  Bytes host_required = 0;
  Bytes device_budget = 0;
  Bytes host_budget = 0;

  std::string reason() const;
};

/// Startup feasibility.
///
/// Device: fixed overhead + mandatory blocks + slot_count * per_slot_limit
///         + kv_bytes(context).
/// Host:   ceil(host-pinned expert bytes * host_transient_factor)
///         + every other weight byte + kv_bytes(context).
///
/// The host side stages the context cache during non-mapped startup, which
/// is what makes more host-pinned experts fail at a long context while the
/// same pinning succeeds at a shorter one.
FeasibilityReport feasibility_check(const ScenarioConfig& cfg);

/// latency + bytes / bandwidth for bytes > 0; zero when nothing moves.
double transfer_time(Bytes bytes, const CostParameters& cp);

/// compute + max(0, transfer - overlap_factor * compute).
double step_time(double compute, double transfer, const CostParameters& cp);

/// One served token.
struct StepRecord {
  std::uint64_t step = 0;
  std::optional<RotationDecision> decision;
  std::uint64_t prefetch_loads = 0;
  Bytes prefetch_bytes = 0;
  std::vector<SubModuleId> demand_misses;
  Bytes demand_bytes = 0;
  std::uint64_t hit_count = 0;
  double stall_seconds = 0.0;
  double step_seconds = 0.0;
  Bytes resident_bytes_after = 0;  // full device footprint after the step
};

struct Metrics {
  std::uint64_t tokens = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t prefetch_loads = 0;
  Bytes bytes_transferred = 0;
  double stall_time = 0.0;
  double total_time = 0.0;
  double throughput = 0.0;  // tokens / total_time; 0 when nothing ran
  Bytes peak_resident_bytes = 0;
  bool completed = true;

  double hit_rate() const {
    const auto accesses = hits + misses;
    return accesses == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(accesses);
  }
};

Metrics summarize(std::span<const StepRecord> timeline);

}  // namespace rotary
