#include "rotary/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rotary/error.hpp"

namespace rotary {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::invalid_scenario, what); }

Bytes add_checked(Bytes a, Bytes b) {
  if (a > std::numeric_limits<Bytes>::max() - b) bad("byte total overflows 64 bits");
  return a + b;
}

Bytes mul_checked(Bytes a, Bytes b) {
  if (b != 0 && a > std::numeric_limits<Bytes>::max() / b) bad("byte product overflows 64 bits");
  return a * b;
}

}  // namespace

void CostParameters::validate() const {
  if (!(h2d_bandwidth > 0.0) || !std::isfinite(h2d_bandwidth))
    bad("h2d_bandwidth_bytes_per_s must be > 0");
  if (!(per_transfer_latency >= 0.0) || !std::isfinite(per_transfer_latency))
    bad("per_transfer_latency_s must be >= 0");
  if (!(compute_per_token > 0.0) || !std::isfinite(compute_per_token))
    bad("compute_per_token_s must be > 0");
  if (!(overlap_factor >= 0.0 && overlap_factor <= 1.0)) bad("overlap_factor must lie in [0, 1]");
}

void MemoryModel::validate() const {
  if (device_budget == 0) bad("device_budget_bytes must be > 0");
  if (host_budget == 0) bad("host_budget_bytes must be > 0");
  if (!(host_transient_factor >= 1.0) || !std::isfinite(host_transient_factor))
    bad("host_transient_factor must be >= 1");
}

void ScenarioConfig::validate() const {
  cost.validate();
  memory.validate();
  if (slot_count == 0) bad("slot_count must be >= 1");
  if (per_slot_limit == 0) bad("per_slot_limit_bytes must be > 0");
  const auto expert_layers = layout.expert_layers().size();
  if (host_pinned_layers > expert_layers)
    bad("host_pinned_layers " + std::to_string(host_pinned_layers) + " exceeds the " +
        std::to_string(expert_layers) + " expert-bearing layers of the layout");
  if (policy.name == PolicyName::rotary) {
    try {
      policy.rotary.validate(slot_count);
    } catch (const Error& e) {
      bad(e.what());
    }
  }
}

Bytes kv_bytes(std::uint64_t context_length, const MemoryModel& mm) {
  return mul_checked(mm.kv_bytes_per_token, context_length);
}

std::string FeasibilityReport::reason() const {
  if (feasible) return "feasible";
  const std::string which = side == BudgetSide::device ? "device" : "host";
  const Bytes required = side == BudgetSide::device ? device_required : host_required;
  const Bytes budget = side == BudgetSide::device ? device_budget : host_budget;
  return which + " budget exceeded: requires " + std::to_string(required) + " B, budget " +
         std::to_string(budget) + " B, deficit " + std::to_string(deficit) + " B";
}

FeasibilityReport feasibility_check(const ScenarioConfig& cfg) {
  const Bytes kv = kv_bytes(cfg.context_length, cfg.memory);

  Bytes device = cfg.memory.fixed_overhead;
  device = add_checked(device, cfg.layout.mandatory_bytes());
  device = add_checked(device, mul_checked(cfg.slot_count, cfg.per_slot_limit));
  device = add_checked(device, kv);

  const Bytes pinned = cfg.layout.expert_bytes_in_first_layers(cfg.host_pinned_layers);
  const long double staged =
      std::ceil(static_cast<long double>(pinned) * cfg.memory.host_transient_factor);
  if (staged > static_cast<long double>(std::numeric_limits<Bytes>::max()))
    bad("host requirement overflows 64 bits");
  Bytes host = static_cast<Bytes>(staged);
  host = add_checked(host, cfg.layout.total_bytes() - pinned);
  host = add_checked(host, kv);

  FeasibilityReport r;
  r.device_required = device;
  r.host_required = host;
  r.device_budget = cfg.memory.device_budget;
  r.host_budget = cfg.memory.host_budget;
  if (device > cfg.memory.device_budget) {
    r.feasible = false;
    r.side = BudgetSide::device;
    r.deficit = device - cfg.memory.device_budget;
  } else if (host > cfg.memory.host_budget) {
    r.feasible = false;
    r.side = BudgetSide::host;
    r.deficit = host - cfg.memory.host_budget;
  }
  return r;
}

double transfer_time(Bytes bytes, const CostParameters& cp) {
  if (bytes == 0) return 0.0;
  return cp.per_transfer_latency + static_cast<double>(bytes) / cp.h2d_bandwidth;
}

double step_time(double compute, double transfer, const CostParameters& cp) {
  return compute + std::max(0.0, transfer - cp.overlap_factor * compute);
}

Metrics summarize(std::span<const StepRecord> timeline) {
  Metrics m;
  for (const auto& r : timeline) {
    ++m.tokens;
    m.hits += r.hit_count;
    m.misses += r.demand_misses.size();
    m.prefetch_loads += r.prefetch_loads;
    m.bytes_transferred += r.prefetch_bytes + r.demand_bytes;
    m.stall_time += r.stall_seconds;
    m.total_time += r.step_seconds;
    m.peak_resident_bytes = std::max(m.peak_resident_bytes, r.resident_bytes_after);
  }
  m.throughput = m.total_time > 0.0 ? static_cast<double>(m.tokens) / m.total_time : 0.0;
  m.completed = true;
  return m;
}

}  // namespace rotary
