#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rotary/engine.hpp"
#include "rotary/error.hpp"
#include "rotary/gguf.hpp"
#include "rotary/layout_io.hpp"
#include "rotary/scenario.hpp"

namespace rotary::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument:
      return kUsage;
    case ErrorCode::parse_error:
    case ErrorCode::validation_error:
    case ErrorCode::io_error:
    case ErrorCode::invalid_scenario:
    case ErrorCode::not_gguf:
    case ErrorCode::unsupported_version:
    case ErrorCode::truncated_file:
    case ErrorCode::unknown_type:
      return kInputError;
    default:
      return kInternalError;
  }
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io_error, "cannot write " + path);
  f << text;
  if (!f) throw Error(ErrorCode::io_error, "write failed for " + path);
}

Trace trace_for(const ScenarioFile& sf, const std::string& override_path) {
  if (!override_path.empty()) return read_trace(override_path);
  if (!sf.trace) throw UsageError("scenario names no trace; pass --trace");
  return read_trace(*sf.trace);
}

// "0-3/4-7" or "0,1,2,3/4,5,6,7": phases separated by '/', members are ids
// or inclusive ranges separated by ','.
std::vector<std::vector<SubModuleId>> parse_phases(const std::string& text) {
  auto number = [&](std::string_view s) {
    std::uint32_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size())
      throw UsageError("bad id '" + std::string(s) + "' in --phases");
    return v;
  };
  std::vector<std::vector<SubModuleId>> phases;
  std::stringstream ps(text);
  std::string phase;
  while (std::getline(ps, phase, '/')) {
    std::vector<SubModuleId> ids;
    std::stringstream ms(phase);
    std::string item;
    while (std::getline(ms, item, ',')) {
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        ids.push_back(SubModuleId{number(item)});
        continue;
      }
      const auto lo = number(std::string_view(item).substr(0, dash));
      const auto hi = number(std::string_view(item).substr(dash + 1));
      if (hi < lo) throw UsageError("empty range '" + item + "' in --phases");
      for (auto i = lo; i <= hi; ++i) ids.push_back(SubModuleId{i});
    }
    if (ids.empty()) throw UsageError("empty phase in --phases");
    phases.push_back(std::move(ids));
  }
  if (phases.empty()) throw UsageError("--phases is empty");
  return phases;
}

std::vector<PolicyKind> parse_policies(const std::string& list, const PolicyKind& base) {
  std::vector<PolicyKind> kinds;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    PolicyKind k = base;
    try {
      k.name = parse_policy_name(name);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    kinds.push_back(k);
  }
  if (kinds.empty()) throw UsageError("--policies is empty");
  return kinds;
}

std::string gguf_summary(const gguf::File& file, const gguf::LayoutBuild& build) {
  nlohmann::ordered_json j;
  j["version"] = file.header.version;
  j["tensor_count"] = file.header.tensor_count;
  j["metadata_kv_count"] = file.header.metadata_kv_count;
  j["alignment"] = file.alignment;
  j["data_offset"] = file.data_offset;
  j["metadata"] = file.metadata;
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& t : file.tensors) {
    const auto traits = gguf::type_traits(static_cast<std::uint32_t>(t.type));
    tensors.push_back({{"name", t.name},
                       {"type", traits ? traits->name : "?"},
                       {"dims", t.dims},
                       {"offset", t.offset},
                       {"bytes", gguf::tensor_bytes(t)}});
  }
  j["tensors"] = std::move(tensors);

  const auto& layout = build.layout;
  Bytes expert_bytes = 0;
  std::size_t experts = 0;
  for (const auto& sm : layout.submodules())
    if (sm.kind == SubModuleKind::expert) {
      ++experts;
      expert_bytes += sm.size_bytes;
    }
  j["layout"] = {{"submodules", layout.submodules().size()},
                 {"experts", experts},
                 {"experts_per_layer", build.experts_per_layer},
                 {"expert_layers", layout.expert_layers().size()},
                 {"expert_bytes", expert_bytes},
                 {"shared_bytes", layout.total_bytes() - expert_bytes},
                 {"mandatory_bytes", layout.mandatory_bytes()},
                 {"total_bytes", layout.total_bytes()}};
  j["warnings"] = build.warnings;
  return j.dump(2) + "\n";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Expert residency simulator", "rotary-sim"};
  app.require_subcommand(0, 1);

  std::string scenario, trace_path, out_path, timeline_path, policies = "lru,rotary,belady";
  std::string traces_dir, format = "table";

  auto* simulate = app.add_subcommand("simulate", "Run one scenario and write a report");
  simulate->add_option("-c,--config", scenario, "Scenario file")->required();
  simulate->add_option("--trace", trace_path, "Trace file (overrides the scenario)");
  simulate->add_option("-o,--out", out_path, "Report path (default: stdout)");
  simulate->add_option("--timeline", timeline_path, "Also write the per-step timeline as CSV");

  auto* compare_cmd = app.add_subcommand("compare", "Run several policies on one trace");
  compare_cmd->add_option("-c,--config", scenario, "Scenario file")->required();
  compare_cmd->add_option("--policies", policies, "Comma-separated policy names")
      ->capture_default_str();
  compare_cmd->add_option("--trace", trace_path, "Trace file (overrides the scenario)");
  compare_cmd->add_option("--format", format, "table or json")
      ->check(CLI::IsMember({"table", "json"}))
      ->capture_default_str();
  compare_cmd->add_option("-o,--out", out_path, "Report path (default: stdout)");

  auto* batch_cmd = app.add_subcommand("batch", "Run every *.jsonl trace in a directory");
  batch_cmd->add_option("-c,--config", scenario, "Scenario file")->required();
  batch_cmd->add_option("--traces", traces_dir, "Directory of traces")->required();
  batch_cmd->add_option("-o,--out", out_path, "Report path (default: stdout)");

  std::string kind = "uniform", phases;
  std::uint64_t steps = 256, phase_len = 8, repeats = 2, seed = 0;
  std::uint32_t universe = 64, top_k = 2;
  double zipf_s = 1.0, affinity = kDefaultPhaseAffinity;
  auto* gen = app.add_subcommand("gen-trace", "Generate a synthetic trace");
  gen->add_option("--kind", kind, "uniform, zipf or phased")
      ->check(CLI::IsMember({"uniform", "zipf", "phased"}))
      ->capture_default_str();
  gen->add_option("--steps", steps)->capture_default_str();
  gen->add_option("--universe", universe)->capture_default_str();
  gen->add_option("--top-k", top_k)->capture_default_str();
  gen->add_option("--zipf-s", zipf_s)->capture_default_str();
  gen->add_option("--phases", phases, "e.g. 0-3/4-7");
  gen->add_option("--phase-len", phase_len)->capture_default_str();
  gen->add_option("--repeats", repeats)->capture_default_str();
  gen->add_option("--phase-affinity", affinity)->capture_default_str();
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("-o,--out", out_path, "Trace path (default: stdout)");

  std::string gguf_path, pattern = gguf::ExpertClassifier::kDefaultExpertPattern, layout_out;
  auto* inspect = app.add_subcommand("inspect-gguf", "Summarize a GGUF tensor table");
  inspect->add_option("path", gguf_path, "GGUF file")->required();
  inspect->add_option("--expert-pattern", pattern, "Regex; group 1 layer, group 2 expert");
  inspect->add_option("--layout-out", layout_out, "Write the derived layout JSON here");
  inspect->add_option("-o,--out", out_path, "Summary path (default: stdout)");

  std::optional<std::size_t> pinned;
  std::optional<std::uint64_t> context;
  auto* feas = app.add_subcommand("feasibility", "Check startup memory budgets");
  feas->add_option("-c,--config", scenario, "Scenario file")->required();
  feas->add_option("--host-pinned-layers", pinned);
  feas->add_option("--context-length", context);
  feas->add_option("-o,--out", out_path, "Report path (default: stdout)");

  if (args.empty()) {
    err << app.help();
    return kUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  if (app.get_subcommands().empty()) {
    err << app.help();
    return kUsage;
  }

  try {
    if (simulate->parsed()) {
      const auto sf = load_scenario(scenario);
      const auto trace = trace_for(sf, trace_path);
      const auto report = run(sf.config, trace);
      emit(report_to_json(report, true), out_path, out);
      if (!timeline_path.empty()) {
        std::ostringstream csv;
        write_timeline_csv(csv, report.timeline);
        emit(csv.str(), timeline_path, out);
      }
      if (report.outcome != Outcome::completed) {
        err << "initialization failed: " << report.feasibility.reason() << "\n";
        return kInitializationFailure;
      }
      return kOk;
    }

    if (compare_cmd->parsed()) {
      const auto sf = load_scenario(scenario);
      const auto kinds = parse_policies(policies, sf.config.policy);
      const auto trace = trace_for(sf, trace_path);
      const auto report = compare(sf.config, kinds, trace);
      emit(format == "json" ? comparison_to_json(report) : comparison_table(report), out_path, out);
      const bool failed = std::any_of(report.runs.begin(), report.runs.end(), [](const auto& r) {
        return r.outcome != Outcome::completed;
      });
      if (failed) {
        err << "initialization failed: " << report.runs.front().feasibility.reason() << "\n";
        return kInitializationFailure;
      }
      return kOk;
    }

    if (batch_cmd->parsed()) {
      const auto sf = load_scenario(scenario);
      if (!fs::is_directory(traces_dir))
        throw Error(ErrorCode::io_error, "not a directory: " + traces_dir);
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(traces_dir))
        if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      if (files.empty()) throw UsageError("no *.jsonl traces in " + traces_dir);
      std::vector<Trace> traces;
      for (const auto& f : files) traces.push_back(read_trace(f));
      const auto report = batch(sf.config, traces);
      emit(batch_to_json(report), out_path, out);
      err << report.completed << "/" << report.total << " completed, "
          << report.abnormal_terminations << " abnormal\n";
      if (report.abnormal_terminations > 0) return kInternalError;
      if (report.initialization_failures > 0) return kInitializationFailure;
      return kOk;
    }

    if (gen->parsed()) {
      Trace t;
      if (kind == "uniform") {
        t = gen_uniform(steps, universe, top_k, seed);
      } else if (kind == "zipf") {
        t = gen_zipf(steps, universe, top_k, zipf_s, seed);
      } else {
        if (phases.empty()) throw UsageError("--kind phased needs --phases");
        t = gen_phased(parse_phases(phases), phase_len, repeats, seed, affinity);
      }
      emit(serialize_trace(t), out_path, out);
      return kOk;
    }

    if (inspect->parsed()) {
      gguf::ExpertClassifier classifier;
      classifier.expert_pattern = pattern;
      classifier.validate();
      const auto file = gguf::read_file(fs::path(gguf_path));
      const auto build = gguf::build_layout(file.tensors, classifier);
      for (const auto& w : build.warnings) err << "warning: " << w << "\n";
      if (!layout_out.empty()) write_layout(layout_out, build.layout);
      emit(gguf_summary(file, build), out_path, out);
      return kOk;
    }

    if (feas->parsed()) {
      auto sf = load_scenario(scenario);
      if (pinned) sf.config.host_pinned_layers = *pinned;
      if (context) sf.config.context_length = *context;
      sf.config.validate();
      const auto report = feasibility_check(sf.config);
      emit(feasibility_to_json(report), out_path, out);
      if (!report.feasible) {
        err << "initialization failed: " << report.reason() << "\n";
        return kInitializationFailure;
      }
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kUsage;
}

}  // namespace rotary::cli
