// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "gguf_writer.hpp"
#include "oracles.hpp"
#include "rotary/engine.hpp"
#include "rotary/error.hpp"
#include "rotary/gguf.hpp"
#include "rotary/scenario.hpp"

using namespace rotary;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = ROTARY_FIXTURE_DIR;

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    if (pass) detail = what;
    pass = false;
  }
};

SubModuleId sid(std::uint32_t i) { return SubModuleId{i}; }

// Equal-size experts plus one mandatory shared block; device budget is exactly
// the feasibility requirement so the slot group runs at its byte limit.
ScenarioConfig unit_config(std::uint32_t experts, std::size_t slots, Bytes expert_bytes,
                           PolicyName policy) {
  std::vector<SubModule> subs;
  for (std::uint32_t i = 0; i < experts; ++i)
    subs.push_back({sid(i), expert_bytes, SubModuleKind::expert, i / 4, i % 4});
  subs.push_back({sid(experts), 3 * expert_bytes, SubModuleKind::shared, 0, std::nullopt});
  ScenarioConfig cfg;
  cfg.layout = ModelLayout(subs, {sid(experts)});
  cfg.slot_count = slots;
  cfg.per_slot_limit = expert_bytes;
  cfg.context_length = 64;
  cfg.memory.kv_bytes_per_token = 16;
  cfg.memory.fixed_overhead = 1000;
  cfg.memory.device_budget = 1000 + 3 * expert_bytes + slots * expert_bytes + 64 * 16;
  cfg.memory.host_budget = 1ull << 40;
  cfg.cost.compute_per_token = 0.01;
  cfg.cost.h2d_bandwidth = 1e9;
  cfg.cost.per_transfer_latency = 1e-5;
  cfg.cost.overlap_factor = 0.5;
  cfg.policy.name = policy;
  return cfg;
}

Trace random_small_trace(std::mt19937_64& rng, std::uint32_t universe, std::size_t cap) {
  const std::uint64_t steps = 1 + rng() % 200;
  const std::uint32_t top_k = 1 + static_cast<std::uint32_t>(rng() % std::min<std::size_t>(cap, universe));
  switch (rng() % 3) {
    case 0:
      return gen_uniform(steps, universe, top_k, rng());
    case 1:
      return gen_zipf(steps, universe, top_k, 0.5 + (rng() % 20) / 10.0, rng());
    default: {
      std::vector<std::vector<SubModuleId>> phases;
      const std::uint32_t width = 1 + rng() % std::min<std::size_t>(universe, 8);
      for (std::uint32_t start = 0; start + width <= universe && phases.size() < 4; start += width) {
        std::vector<SubModuleId> p;
        for (std::uint32_t i = start; i < start + width; ++i) p.push_back(sid(i));
        phases.push_back(p);
      }
      const std::uint64_t len = width + rng() % 10;
      const std::uint64_t repeats = std::max<std::uint64_t>(1, steps / (len * phases.size()));
      auto t = gen_phased(phases, len, std::min<std::uint64_t>(repeats, 8), rng());
      t.universe = universe;
      return t;
    }
  }
}

Verdict c1_reciprocity() {
  Verdict o;
  std::vector<StepRecord> steps(2048);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    steps[i].step = i;
    steps[i].step_seconds = 0.04749;
  }
  const auto m = summarize(steps);
  o.require(std::abs(m.throughput - 21.06) / 21.06 <= 5e-4,
            "throughput " + std::to_string(m.throughput));
  o.require(std::abs(m.total_time - 97.26) <= 0.01, "total " + std::to_string(m.total_time));
  o.require(m.total_time <= 98.54, "total exceeds 98.54 s");
  o.detail = o.pass ? "throughput " + std::to_string(m.throughput) + " tok/s, total " +
                          std::to_string(m.total_time) + " s"
                    : o.detail;
  return o;
}

Verdict c2_feasibility_pattern() {
  Verdict o;
  const auto path = kFixtures / "fig3.scenario";
  const auto sf = load_scenario(path);
  struct Row {
    std::size_t pinned;
    std::uint64_t ctx;
    bool feasible;
    int exit_code;
  };
  const Row rows[] = {{32, 4096, true, 0}, {36, 2048, true, 0}, {36, 4096, false, 2}};
  std::string summary;
  for (const auto& row : rows) {
    auto cfg = sf.config;
    cfg.host_pinned_layers = row.pinned;
    cfg.context_length = row.ctx;
    const auto r = feasibility_check(cfg);
    o.require(r.feasible == row.feasible,
              "row " + std::to_string(row.pinned) + "/" + std::to_string(row.ctx) + ": " + r.reason());
    std::ostringstream out, err;
    const int code = cli::dispatch({"feasibility", "-c", path.string(), "--host-pinned-layers",
                                    std::to_string(row.pinned), "--context-length",
                                    std::to_string(row.ctx)},
                                   out, err);
    o.require(code == row.exit_code, "exit code " + std::to_string(code));
    summary += (summary.empty() ? "" : ", ") + std::to_string(code);
  }
  if (o.pass) o.detail = "exit codes " + summary;
  return o;
}

Verdict c3_budget_invariant() {
  Verdict o;
  std::mt19937_64 rng(3);
  std::size_t scenarios = 0, steps = 0;
  for (; scenarios < 1200; ++scenarios) {
    const std::uint32_t experts = 2 + rng() % 30;
    const std::size_t slots = 1 + rng() % std::min<std::uint32_t>(experts, 10);
    std::vector<SubModule> subs;
    Bytes largest = 0;
    for (std::uint32_t i = 0; i < experts; ++i) {
      const Bytes b = 1 + rng() % 5000;
      largest = std::max(largest, b);
      subs.push_back({sid(i), b, SubModuleKind::expert, 0, i});
    }
    subs.push_back({sid(experts), 1 + rng() % 10000, SubModuleKind::shared, 0, std::nullopt});
    ScenarioConfig cfg;
    cfg.layout = ModelLayout(subs, {sid(experts)});
    cfg.slot_count = slots;
    cfg.per_slot_limit = largest;
    cfg.context_length = rng() % 512;
    cfg.memory.kv_bytes_per_token = rng() % 64;
    cfg.memory.fixed_overhead = rng() % 4096;
    cfg.memory.host_budget = 1ull << 40;
    cfg.cost.compute_per_token = 0.001 + (rng() % 100) / 1000.0;
    cfg.cost.h2d_bandwidth = 1e6 + static_cast<double>(rng() % 1'000'000'000);
    cfg.cost.overlap_factor = (rng() % 11) / 10.0;
    cfg.policy.name = static_cast<PolicyName>(rng() % 5);
    cfg.policy.seed = rng();
    cfg.policy.rotary.lambda = 0.1 + (rng() % 10) / 11.0;
    cfg.policy.rotary.history = 1 + rng() % 6;
    cfg.policy.rotary.snapshot_period = 1 + rng() % 20;
    cfg.seed = rng();
    const Bytes need = feasibility_check(cfg).device_required;
    cfg.memory.device_budget = need + (rng() % 2 ? 0 : rng() % 20000);

    const auto trace = gen_zipf(5 + rng() % 20, experts,
                                1 + rng() % std::min<std::size_t>(slots, 4), rng() % 3, rng());
    try {
      const auto r = run(cfg, trace);
      for (const auto& s : r.timeline) {
        ++steps;
        o.require(s.resident_bytes_after <= cfg.memory.device_budget,
                  "scenario " + std::to_string(scenarios) + " step " + std::to_string(s.step) +
                      " footprint over budget");
      }
    } catch (const std::exception& e) {
      o.require(false, "scenario " + std::to_string(scenarios) + " threw: " + e.what());
    }
  }
  o.require(steps >= 10'000, "only " + std::to_string(steps) + " steps");
  if (o.pass)
    o.detail = std::to_string(scenarios) + " scenarios, " + std::to_string(steps) + " steps";
  return o;
}

Verdict c4_belady_dominance() {
  Verdict o;
  const auto worked = oracle::singleton_trace({1, 2, 3, 1, 2});
  o.require(oracle::exhaustive_min(worked, 2) == 4, "exhaustive MIN on worked example != 4");
  o.require(belady_misses(worked, 2) == 4, "belady on worked example != 4");
  o.require(lru_reference(worked, 2) == 5 && oracle::lru(worked, 2) == 5,
            "LRU on worked example != 5");
  {
    auto cfg = unit_config(4, 2, 100, PolicyName::lru);
    o.require(run(cfg, worked).metrics.misses == 5, "engine LRU on worked example != 5");
  }

  std::mt19937_64 rng(4);
  const int traces = 1000;
  for (int t = 0; t < traces; ++t) {
    const std::uint32_t universe = 2 + rng() % 15;
    const std::size_t cap = 1 + rng() % 8;
    const auto trace = random_small_trace(rng, universe, cap);
    const auto opt = belady_misses(trace, cap);
    auto cfg = unit_config(universe, cap, 64, PolicyName::lru);
    for (auto p : {PolicyName::lru, PolicyName::fifo, PolicyName::random, PolicyName::rotary}) {
      cfg.policy.name = p;
      cfg.policy.seed = rng();
      const auto m = run(cfg, trace).metrics;
      const auto fetched = m.misses + m.prefetch_loads;
      o.require(opt <= fetched, "trace " + std::to_string(t) + ": belady " + std::to_string(opt) +
                                    " > " + std::string(to_string(p)) + " " +
                                    std::to_string(fetched));
    }
  }
  if (o.pass) o.detail = std::to_string(traces) + " traces; worked example belady 4, lru 5";
  return o;
}

Verdict c5_lru_oracle() {
  Verdict o;
  std::mt19937_64 rng(5);
  int mismatches = 0;
  const int traces = 1000;
  for (int t = 0; t < traces; ++t) {
    const std::uint32_t universe = 2 + rng() % 30;
    const std::size_t cap = 1 + rng() % 10;
    const auto trace = random_small_trace(rng, universe, cap);
    auto cfg = unit_config(universe, cap, 32, PolicyName::lru);
    const auto engine = run(cfg, trace).metrics.misses;
    if (engine != lru_reference(trace, cap) || engine != oracle::lru(trace, cap)) ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " mismatches");
  if (o.pass) o.detail = std::to_string(traces) + " traces, 0 mismatches";
  return o;
}

Verdict c6_group_laws() {
  Verdict o;
  std::mt19937_64 rng(6);
  std::size_t checks = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 64;
    SlotGroup g(n, 1);
    g.rotate_forward(rng() % n);
    std::vector<std::size_t> ks(1 + rng() % 8);
    for (auto& k : ks) k = rng() % (2 * n + 1);

    const auto h0 = g.head();
    std::size_t sum = 0;
    for (auto k : ks) {
      const auto before = g.head();
      const auto cand = g.rotate_forward(k);
      sum += k;
      bool ok = cand.size() == k;
      for (std::size_t i = 0; ok && i < k; ++i) ok = cand[i] == (before + i) % n;
      o.require(ok, "candidate list wrong for n=" + std::to_string(n));
    }
    o.require(g.head() == (h0 + sum) % n, "composition law, n=" + std::to_string(n));
    for (auto it = ks.rbegin(); it != ks.rend(); ++it) g.rotate_reverse(*it);
    o.require(g.head() == h0, "inverse law, n=" + std::to_string(n));
    g.rotate_forward(n);
    o.require(g.head() == h0, "period law, n=" + std::to_string(n));
    g.rotate_reverse(n);
    o.require(g.head() == h0, "reverse period law, n=" + std::to_string(n));
    checks += ks.size() + 3;
  }
  if (o.pass) o.detail = std::to_string(checks) + " law checks";
  return o;
}

Verdict c7_recurring_context() {
  Verdict o;
  const auto trace = gen_phased({{sid(0), sid(1), sid(2), sid(3)}, {sid(4), sid(5), sid(6), sid(7)}},
                                8, 2, 0);
  auto cfg = unit_config(8, 4, 1'000'000, PolicyName::rotary);
  cfg.policy.rotary.lambda = 1.0;
  cfg.policy.rotary.tau = 0.9;
  cfg.policy.rotary.history = 2;
  const auto rotary_misses = run(cfg, trace).metrics.misses;
  cfg.policy.name = PolicyName::lru;
  const auto lru_misses = run(cfg, trace).metrics.misses;
  const auto ref = lru_reference(trace, 4);
  const auto opt = belady_misses(trace, 4);

  o.require(rotary_misses == 8, "rotary misses " + std::to_string(rotary_misses) + ", expected 8");
  o.require(lru_misses == 12, "LRU misses " + std::to_string(lru_misses) + " (reference " +
                                  std::to_string(ref) + ", Belady lower bound " +
                                  std::to_string(opt) + "), expected 12");
  if (o.pass) o.detail = "rotary 8, LRU 12";
  else o.detail += "; rotary " + std::to_string(rotary_misses);
  return o;
}

Verdict c8_smoke_batch() {
  Verdict o;
  auto cfg = unit_config(32, 8, 4096, PolicyName::rotary);
  std::vector<Trace> traces;
  for (std::uint64_t i = 0; i < 10; ++i) traces.push_back(gen_zipf(128, 32, 4, 1.0, 100 + i));
  const auto rep = batch(cfg, traces);
  o.require(rep.total == 10, "total " + std::to_string(rep.total));
  o.require(rep.completion_rate == 1.0, "completion rate " + std::to_string(rep.completion_rate));
  o.require(rep.abnormal_terminations == 0 && rep.zero_abnormal,
            std::to_string(rep.abnormal_terminations) + " abnormal");
  if (o.pass) o.detail = "10/10 completed, 0 abnormal";
  return o;
}

Verdict c9_gguf_round_trip() {
  Verdict o;
  std::mt19937_64 rng(9);
  const auto& types = testgguf::known_types();
  const int specs = 150;
  for (int trial = 0; trial < specs; ++trial) {
    testgguf::Spec s;
    s.version = 2 + rng() % 2;
    s.alignment = std::uint64_t{1} << (3 + rng() % 4);
    s.metadata = {{"general.architecture", std::string("moe")},
                  {"moe.expert_count", std::uint32_t{4}},
                  {"tokenizer.ggml.tokens", testgguf::StringArray{{"x", "yy"}}}};
    const std::uint64_t experts = 1 + rng() % 8;
    const int layers = rng() % 4;
    for (int l = 0; l < layers; ++l) {
      const auto& g = types[rng() % types.size()];
      s.tensors.push_back({"blk." + std::to_string(l) + ".ffn_gate_exps.weight",
                           {g.block_elements * (1 + rng() % 4), 1 + rng() % 3, experts}, g.code});
      std::vector<std::uint64_t> dims(1 + rng() % 4);
      for (auto& d : dims) d = 1 + rng() % 64;
      s.tensors.push_back({"blk." + std::to_string(l) + ".attn_output.weight", dims,
                           types[rng() % types.size()].code});
    }
    if (rng() % 2) s.tensors.push_back({"output.weight", {1 + rng() % 500, 2}, 1});

    const auto w = testgguf::Writer{}.write(s);
    const auto f = gguf::read_file(std::span<const std::uint8_t>(w.bytes));
    bool same = f.tensors.size() == s.tensors.size();
    Bytes total = 0;
    for (std::size_t i = 0; same && i < s.tensors.size(); ++i) {
      same = f.tensors[i].name == s.tensors[i].name && f.tensors[i].dims == s.tensors[i].dims &&
             static_cast<std::uint32_t>(f.tensors[i].type) == s.tensors[i].type &&
             gguf::tensor_bytes(f.tensors[i]) == w.sizes[i];
      total += w.sizes[i];
    }
    o.require(same, "spec " + std::to_string(trial) + " table mismatch");
    if (!s.tensors.empty()) {
      const auto b = gguf::build_layout(f.tensors, {});
      o.require(b.layout.total_bytes() == total, "spec " + std::to_string(trial) + " byte drift");
    }
  }
  if (o.pass) o.detail = std::to_string(specs) + " fuzzed files";
  return o;
}

Verdict c10_determinism() {
  Verdict o;
  const auto dir = fs::temp_directory_path() / "rotary_acceptance_determinism";
  fs::create_directories(dir);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  for (const char* name : {"phased.scenario", "fig3.scenario"}) {
    const auto sc = (kFixtures / name).string();
    std::string first;
    for (int i = 0; i < 3; ++i) {
      const auto out = dir / ("report" + std::to_string(i) + ".json");
      std::ostringstream so, se;
      const int code = cli::dispatch({"simulate", "-c", sc, "--out", out.string()}, so, se);
      o.require(code == 0, std::string(name) + " exit " + std::to_string(code) + ": " + se.str());
      const auto text = slurp(out);
      if (i == 0) first = text;
      o.require(!text.empty() && text == first, std::string(name) + " reports differ");
    }
  }
  fs::remove_all(dir);
  if (o.pass) o.detail = "3 runs x 2 scenarios byte-identical";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* name;
    double limit_s;
    std::function<Verdict()> check;
  };
  const Criterion criteria[] = {
      {1, "throughput/latency reciprocity", 1, c1_reciprocity},
      {2, "host-pinning feasibility pattern", 1, c2_feasibility_pattern},
      {3, "device budget invariant", 30, c3_budget_invariant},
      {4, "Belady dominance", 60, c4_belady_dominance},
      {5, "LRU oracle equivalence", 30, c5_lru_oracle},
      {6, "rotation group laws", 5, c6_group_laws},
      {7, "recurring-context benefit", 1, c7_recurring_context},
      {8, "smoke-batch accounting", 10, c8_smoke_batch},
      {9, "GGUF round trip", 10, c9_gguf_round_trip},
      {10, "report determinism", 5, c10_determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_s) {
      o.pass = false;
      o.detail += " (took " + std::to_string(secs) + " s, limit " + std::to_string(c.limit_s) + " s)";
    }
    if (!o.pass) ++failed;
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << " [" << c.number << "] " << c.name << " ("
         << std::fixed;
    line.precision(3);
    line << secs << " s): " << o.detail;
    std::cout << line.str() << std::endl;
  }
  std::cout << (10 - failed) << "/10 criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
