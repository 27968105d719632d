#include "rotary/engine.hpp"

#include <future>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "digest.hpp"
#include "rotary/error.hpp"
#include "rotary/layout_io.hpp"

namespace rotary {

using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::invalid_scenario, what); }

void check_trace_fits(const ScenarioConfig& cfg, const Trace& trace) {
  auto violations = validate_trace(trace);
  if (!violations.empty())
    invalid("trace line " + std::to_string(violations.front().line) + ": " +
            violations.front().message);

  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    std::size_t slot_managed = 0;
    for (auto id : trace.events[i].required) {
      const SubModule* sm = cfg.layout.find(id);
      if (!sm)
        invalid("trace event " + std::to_string(i) + " requires id " +
                std::to_string(to_index(id)) + ", which the layout does not define");
      if (cfg.layout.is_mandatory(id)) continue;
      if (sm->size_bytes > cfg.per_slot_limit)
        invalid("sub-module " + std::to_string(to_index(id)) + " (" +
                std::to_string(sm->size_bytes) + " B) exceeds per_slot_limit_bytes");
      ++slot_managed;
    }
    if (slot_managed > cfg.slot_count)
      invalid("trace event " + std::to_string(i) + " needs " + std::to_string(slot_managed) +
              " slots at once but slot_count is " + std::to_string(cfg.slot_count));
  }
}

}  // namespace

std::string scenario_digest(const ScenarioConfig& cfg) {
  ojson j;
  j["layout"] = detail::fnv1a_hex(layout_to_json(cfg.layout));
  j["context_length"] = cfg.context_length;
  j["host_pinned_layers"] = cfg.host_pinned_layers;
  j["policy"] = std::string(to_string(cfg.policy.name));
  j["policy_seed"] = cfg.policy.seed;
  const auto& rp = cfg.policy.rotary;
  j["rotary"] = {{"lambda", rp.lambda}, {"tau", rp.tau}, {"k_step", rp.k_step},
                 {"history", rp.history}, {"snapshot_period", rp.snapshot_period},
                 {"tau_boundary", rp.tau_boundary}};
  j["slot_count"] = cfg.slot_count;
  j["per_slot_limit"] = cfg.per_slot_limit;
  j["cost"] = {{"h2d_bandwidth", cfg.cost.h2d_bandwidth},
               {"per_transfer_latency", cfg.cost.per_transfer_latency},
               {"compute_per_token", cfg.cost.compute_per_token},
               {"overlap_factor", cfg.cost.overlap_factor}};
  j["memory"] = {{"device_budget", cfg.memory.device_budget},
                 {"host_budget", cfg.memory.host_budget},
                 {"fixed_overhead", cfg.memory.fixed_overhead},
                 {"kv_bytes_per_token", cfg.memory.kv_bytes_per_token},
                 {"host_transient_factor", cfg.memory.host_transient_factor}};
  j["seed"] = cfg.seed;
  return detail::fnv1a_hex(j.dump());
}

std::string trace_digest(const Trace& trace) {
  return detail::fnv1a_hex(serialize_trace(trace));
}

RunReport run(const ScenarioConfig& cfg, const Trace& trace) {
  cfg.validate();

  RunReport report;
  report.policy = cfg.policy.name;
  report.scenario_digest = scenario_digest(cfg);
  report.trace_digest = trace_digest(trace);
  report.feasibility = feasibility_check(cfg);
  if (!report.feasibility.feasible) {
    report.outcome = Outcome::initialization_failure;
    report.metrics = Metrics{};
    report.metrics.completed = false;
    return report;
  }

  check_trace_fits(cfg, trace);

  const Bytes kv = kv_bytes(cfg.context_length, cfg.memory);
  const Bytes device_base = cfg.memory.fixed_overhead + kv;
  ResidencyState state(cfg.layout, SlotGroup(cfg.slot_count, cfg.per_slot_limit),
                       cfg.memory.device_budget - device_base);

  PolicyKind kind = cfg.policy;
  if (kind.name == PolicyName::random && kind.seed == 0) kind.seed = cfg.seed;
  auto policy = make_policy(kind, trace.universe, cfg.slot_count, &trace);

  report.timeline.reserve(trace.events.size());
  std::vector<SubModuleId> in_use;
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const AccessEvent& ev = trace.events[i];
    StepRecord rec;
    rec.step = ev.step;
    double transfer = 0.0;

    policy->begin_event(i);
    Plan plan = policy->plan_prefetch(ev, state);
    rec.decision = plan.rotation;

    for (const auto& load : plan.prefetch_loads) {
      if (state.is_resident(load.id)) continue;
      const SubModule* sm = cfg.layout.find(load.id);
      if (!sm || sm->size_bytes > cfg.per_slot_limit) continue;
      try {
        state.assign(load.slot, *sm);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::budget_exceeded) continue;  // prefetch is best effort
        throw;
      }
      policy->on_load(load.slot, load.id);
      ++rec.prefetch_loads;
      rec.prefetch_bytes += sm->size_bytes;
      transfer += transfer_time(sm->size_bytes, cfg.cost);
    }

    in_use.clear();
    for (auto id : ev.required) {
      if (state.is_mandatory(id)) {
        ++rec.hit_count;
      } else if (auto slot = state.lookup(id)) {
        ++rec.hit_count;
        policy->on_access(*slot, id);
      } else {
        const SubModule& sm = *cfg.layout.find(id);
        const SlotIndex victim = policy->choose_victim(state, sm, in_use);
        state.assign(victim, sm);
        policy->on_load(victim, id);
        policy->on_access(victim, id);
        rec.demand_misses.push_back(id);
        rec.demand_bytes += sm.size_bytes;
        transfer += transfer_time(sm.size_bytes, cfg.cost);
      }
      in_use.push_back(id);
    }

    rec.step_seconds = step_time(cfg.cost.compute_per_token, transfer, cfg.cost);
    rec.stall_seconds = rec.step_seconds - cfg.cost.compute_per_token;
    rec.resident_bytes_after = device_base + state.resident_bytes();
    if (rec.resident_bytes_after > cfg.memory.device_budget)
      throw std::logic_error("device footprint exceeded the budget at step " +
                             std::to_string(ev.step));
    report.timeline.push_back(std::move(rec));
  }

  report.metrics = summarize(report.timeline);
  report.outcome = Outcome::completed;
  return report;
}

ComparisonReport compare(const ScenarioConfig& base, std::span<const PolicyKind> policies,
                         const Trace& trace, bool parallel) {
  ComparisonReport out;
  out.trace_digest = trace_digest(trace);
  auto one = [&](const PolicyKind& kind) {
    ScenarioConfig cfg = base;
    cfg.policy = kind;
    return run(cfg, trace);
  };
  if (parallel) {
    std::vector<std::future<RunReport>> futures;
    for (const auto& kind : policies)
      futures.push_back(std::async(std::launch::async, one, std::cref(kind)));
    for (auto& f : futures) out.runs.push_back(f.get());
  } else {
    for (const auto& kind : policies) out.runs.push_back(one(kind));
  }
  return out;
}

namespace {

BatchEntry run_entry(const ScenarioConfig& cfg, const Trace& trace) {
  BatchEntry e;
  e.provenance = trace.provenance;
  try {
    e.trace_digest = trace_digest(trace);
    RunReport r = run(cfg, trace);
    e.metrics = r.metrics;
    e.completed = r.outcome == Outcome::completed;
    e.detail = e.completed ? "completed" : r.feasibility.reason();
  } catch (const Error& ex) {
    // A trace the scenario cannot host is refused up front, like a budget miss.
    if (ex.code() == ErrorCode::invalid_scenario || ex.code() == ErrorCode::infeasible_trace) {
      e.detail = ex.what();
    } else {
      e.abnormal = true;
      e.detail = ex.what();
    }
  } catch (const std::exception& ex) {
    e.abnormal = true;
    e.detail = ex.what();
  } catch (...) {
    e.abnormal = true;
    e.detail = "unknown internal error";
  }
  return e;
}

}  // namespace

BatchReport batch(const ScenarioConfig& cfg, std::span<const Trace> traces, bool parallel) {
  if (traces.empty()) throw Error(ErrorCode::invalid_argument, "batch needs at least one trace");
  BatchReport out;
  if (parallel) {
    std::vector<std::future<BatchEntry>> futures;
    for (const auto& t : traces)
      futures.push_back(std::async(std::launch::async, run_entry, std::cref(cfg), std::cref(t)));
    for (auto& f : futures) out.entries.push_back(f.get());
  } else {
    for (const auto& t : traces) out.entries.push_back(run_entry(cfg, t));
  }

  out.total = out.entries.size();
  for (const auto& e : out.entries) {
    if (e.completed) {
      ++out.completed;
    } else if (e.abnormal) {
      ++out.abnormal_terminations;
    } else {
      ++out.initialization_failures;
    }
  }
  out.completion_rate = static_cast<double>(out.completed) / static_cast<double>(out.total);
  out.zero_abnormal = out.abnormal_terminations == 0;
  return out;
}

namespace {

ojson metrics_json(const Metrics& m) {
  return ojson{{"tokens", m.tokens},
               {"hits", m.hits},
               {"misses", m.misses},
               {"prefetch_loads", m.prefetch_loads},
               {"hit_rate", m.hit_rate()},
               {"bytes_transferred", m.bytes_transferred},
               {"stall_time_s", m.stall_time},
               {"total_time_s", m.total_time},
               {"throughput_tokens_per_s", m.throughput},
               {"peak_resident_bytes", m.peak_resident_bytes},
               {"completed", m.completed}};
}

ojson feasibility_json(const FeasibilityReport& f) {
  const char* side = f.side == BudgetSide::device ? "device"
                     : f.side == BudgetSide::host ? "host"
                                                  : "none";
  return ojson{{"feasible", f.feasible},
               {"violated_side", side},
               {"deficit_bytes", f.deficit},
               {"device_required_bytes", f.device_required},
               {"device_budget_bytes", f.device_budget},
               {"host_required_bytes", f.host_required},
               {"host_budget_bytes", f.host_budget}};
}

ojson report_json(const RunReport& r, bool include_timeline) {
  ojson j;
  j["scenario_digest"] = r.scenario_digest;
  j["trace_digest"] = r.trace_digest;
  j["policy"] = std::string(to_string(r.policy));
  j["outcome"] = r.outcome == Outcome::completed ? "completed" : "initialization_failure";
  if (r.outcome != Outcome::completed) j["failure_reason"] = r.feasibility.reason();
  j["feasibility"] = feasibility_json(r.feasibility);
  j["metrics"] = metrics_json(r.metrics);
  if (include_timeline) {
    ojson steps = ojson::array();
    for (const auto& s : r.timeline) {
      ojson misses = ojson::array();
      for (auto id : s.demand_misses) misses.push_back(to_index(id));
      steps.push_back({{"step", s.step},
                       {"decision", s.decision ? s.decision->to_string() : ""},
                       {"prefetch_loads", s.prefetch_loads},
                       {"prefetch_bytes", s.prefetch_bytes},
                       {"demand_misses", std::move(misses)},
                       {"demand_bytes", s.demand_bytes},
                       {"hits", s.hit_count},
                       {"stall_s", s.stall_seconds},
                       {"step_s", s.step_seconds},
                       {"resident_bytes", s.resident_bytes_after}});
    }
    j["timeline"] = std::move(steps);
  }
  return j;
}

}  // namespace

std::string feasibility_to_json(const FeasibilityReport& report) {
  ojson j = feasibility_json(report);
  if (!report.feasible) j["reason"] = report.reason();
  return j.dump(2) + "\n";
}

std::string report_to_json(const RunReport& report, bool include_timeline) {
  return report_json(report, include_timeline).dump(2) + "\n";
}

std::string comparison_to_json(const ComparisonReport& report) {
  ojson j;
  j["trace_digest"] = report.trace_digest;
  ojson runs = ojson::array();
  for (const auto& r : report.runs) runs.push_back(report_json(r, false));
  j["runs"] = std::move(runs);
  return j.dump(2) + "\n";
}

std::string batch_to_json(const BatchReport& report) {
  ojson j;
  j["total"] = report.total;
  j["completed"] = report.completed;
  j["initialization_failures"] = report.initialization_failures;
  j["abnormal_terminations"] = report.abnormal_terminations;
  j["completion_rate"] = report.completion_rate;
  j["zero_abnormal"] = report.zero_abnormal;
  ojson entries = ojson::array();
  for (const auto& e : report.entries)
    entries.push_back({{"provenance", e.provenance},
                       {"trace_digest", e.trace_digest},
                       {"completed", e.completed},
                       {"abnormal", e.abnormal},
                       {"detail", e.detail},
                       {"metrics", metrics_json(e.metrics)}});
  j["entries"] = std::move(entries);
  return j.dump(2) + "\n";
}

void write_timeline_csv(std::ostream& out, std::span<const StepRecord> timeline) {
  out << "step,decision,prefetch_bytes,misses,hits,stall_s,step_s,resident_bytes\n";
  std::ostringstream row;
  row << std::setprecision(12);
  for (const auto& s : timeline) {
    row.str({});
    row << s.step << ',' << (s.decision ? s.decision->to_string() : "") << ','
        << s.prefetch_bytes << ',' << s.demand_misses.size() << ',' << s.hit_count << ','
        << s.stall_seconds << ',' << s.step_seconds << ',' << s.resident_bytes_after << '\n';
    out << row.str();
  }
}

std::string comparison_table(const ComparisonReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "policy" << std::right << std::setw(10) << "misses"
     << std::setw(10) << "prefetch" << std::setw(10) << "hit_rate" << std::setw(16)
     << "bytes" << std::setw(12) << "stall_s" << std::setw(14) << "tokens/s" << '\n';
  os << std::fixed;
  for (const auto& r : report.runs) {
    os << std::left << std::setw(8) << to_string(r.policy) << std::right;
    if (r.outcome != Outcome::completed) {
      os << "  initialization failure: " << r.feasibility.reason() << '\n';
      continue;
    }
    const auto& m = r.metrics;
    os << std::setw(10) << m.misses << std::setw(10) << m.prefetch_loads << std::setw(10)
       << std::setprecision(4) << m.hit_rate() << std::setw(16) << m.bytes_transferred
       << std::setw(12) << std::setprecision(4) << m.stall_time << std::setw(14)
       << std::setprecision(3) << m.throughput << '\n';
  }
  return os.str();
}

}  // namespace rotary
