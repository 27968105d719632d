#include "rotary/workloads.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rng.hpp"
#include "rotary/error.hpp"

namespace rotary {

using nlohmann::json;

namespace {

void check_top_k(std::uint32_t universe, std::uint32_t top_k) {
  if (top_k == 0) throw Error(ErrorCode::invalid_argument, "top_k must be >= 1");
  if (top_k > universe)
    throw Error(ErrorCode::invalid_argument,
                "top_k " + std::to_string(top_k) + " exceeds universe " + std::to_string(universe));
}

AccessEvent even_split_event(std::uint64_t step, std::vector<SubModuleId> ids) {
  std::sort(ids.begin(), ids.end());
  AccessEvent ev;
  ev.step = step;
  const double w = 1.0 / static_cast<double>(ids.size());
  for (auto id : ids) ev.routing.push_back({id, w});
  ev.required = std::move(ids);
  return ev;
}

std::string seed_provenance(const std::string& name, std::uint64_t seed) {
  return name + " seed=" + std::to_string(seed);
}

}  // namespace

Trace gen_uniform(std::uint64_t steps, std::uint32_t universe, std::uint32_t top_k,
                  std::uint64_t seed) {
  check_top_k(universe, top_k);
  detail::Rng rng(seed);
  Trace trace;
  trace.universe = universe;
  trace.provenance = seed_provenance("gen_uniform universe=" + std::to_string(universe) +
                                         " top_k=" + std::to_string(top_k),
                                     seed);
  trace.events.reserve(steps);

  std::vector<std::uint32_t> pool(universe);
  for (std::uint64_t step = 0; step < steps; ++step) {
    std::iota(pool.begin(), pool.end(), 0u);
    std::vector<SubModuleId> picked;
    picked.reserve(top_k);
    // partial Fisher-Yates
    for (std::uint32_t i = 0; i < top_k; ++i) {
      auto j = i + static_cast<std::uint32_t>(rng.below(universe - i));
      std::swap(pool[i], pool[j]);
      picked.push_back(SubModuleId{pool[i]});
    }
    trace.events.push_back(even_split_event(step, std::move(picked)));
  }
  return trace;
}

Trace gen_zipf(std::uint64_t steps, std::uint32_t universe, std::uint32_t top_k, double s,
               std::uint64_t seed) {
  check_top_k(universe, top_k);
  if (!(s >= 0.0) || !std::isfinite(s))
    throw Error(ErrorCode::invalid_argument, "zipf exponent must be finite and >= 0");
  detail::Rng rng(seed);
  Trace trace;
  trace.universe = universe;
  std::ostringstream prov;
  prov << "gen_zipf universe=" << universe << " top_k=" << top_k << " s=" << s;
  trace.provenance = seed_provenance(prov.str(), seed);
  trace.events.reserve(steps);

  std::vector<double> base(universe);
  for (std::uint32_t i = 0; i < universe; ++i)
    base[i] = 1.0 / std::pow(static_cast<double>(i) + 1.0, s);

  std::vector<double> weight(universe);
  for (std::uint64_t step = 0; step < steps; ++step) {
    weight = base;
    double remaining = std::accumulate(weight.begin(), weight.end(), 0.0);
    std::vector<SubModuleId> picked;
    picked.reserve(top_k);
    for (std::uint32_t draw = 0; draw < top_k; ++draw) {
      const double target = rng.uniform01() * remaining;
      double acc = 0.0;
      std::uint32_t chosen = universe;
      std::uint32_t last_live = universe;
      for (std::uint32_t i = 0; i < universe; ++i) {
        if (weight[i] == 0.0) continue;
        last_live = i;
        acc += weight[i];
        if (target < acc) {
          chosen = i;
          break;
        }
      }
      if (chosen == universe) chosen = last_live;  // rounding at the tail
      remaining -= weight[chosen];
      weight[chosen] = 0.0;
      picked.push_back(SubModuleId{chosen});
    }
    trace.events.push_back(even_split_event(step, std::move(picked)));
  }
  return trace;
}

Trace gen_phased(const std::vector<std::vector<SubModuleId>>& phase_sets,
                 std::uint64_t phase_len, std::uint64_t repeats, std::uint64_t seed,
                 double affinity) {
  if (phase_sets.empty()) throw Error(ErrorCode::invalid_argument, "phase list is empty");
  if (!(affinity >= 0.0) || !std::isfinite(affinity))
    throw Error(ErrorCode::invalid_argument, "phase affinity must be finite and >= 0");

  std::vector<std::vector<SubModuleId>> phases;
  std::uint32_t universe = 0;
  for (const auto& raw : phase_sets) {
    std::set<SubModuleId> unique(raw.begin(), raw.end());
    if (unique.empty()) throw Error(ErrorCode::invalid_argument, "phase set is empty");
    if (phase_len < unique.size())
      throw Error(ErrorCode::invalid_argument,
                  "phase_len " + std::to_string(phase_len) + " is shorter than a phase set of " +
                      std::to_string(unique.size()));
    universe = std::max(universe, to_index(*unique.rbegin()) + 1);
    phases.emplace_back(unique.begin(), unique.end());
  }

  Trace trace;
  trace.universe = universe;
  std::ostringstream prov;
  prov << "gen_phased phases=" << phases.size() << " phase_len=" << phase_len
       << " repeats=" << repeats << " affinity=" << affinity;
  trace.provenance = seed_provenance(prov.str(), seed);

  std::uint64_t step = 0;
  for (std::uint64_t r = 0; r < repeats; ++r) {
    for (const auto& phase : phases) {
      for (std::uint64_t i = 0; i < phase_len; ++i) {
        const SubModuleId req = phase[i % phase.size()];
        AccessEvent ev;
        ev.step = step++;
        ev.required = {req};
        for (auto id : phase) {
          if (id == req) {
            ev.routing.push_back({id, 1.0});
          } else if (affinity > 0.0) {
            ev.routing.push_back({id, affinity});
          }
        }
        trace.events.push_back(std::move(ev));
      }
    }
  }
  return trace;
}

std::vector<TraceViolation> validate_trace(const Trace& trace) {
  std::vector<TraceViolation> out;
  auto line_of = [&](std::size_t i) {
    return i < trace.source_lines.size() ? trace.source_lines[i] : i + 1;
  };
  auto report = [&](std::size_t i, std::string msg) {
    out.push_back({line_of(i), std::move(msg)});
  };

  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const auto& ev = trace.events[i];
    if (i > 0 && ev.step <= trace.events[i - 1].step)
      report(i, "step " + std::to_string(ev.step) + " does not increase (previous " +
                    std::to_string(trace.events[i - 1].step) + ")");
    if (ev.required.empty()) report(i, "required set is empty");

    std::set<SubModuleId> routed;
    for (const auto& r : ev.routing) {
      if (!(r.weight >= 0.0) || !std::isfinite(r.weight))
        report(i, "routing weight for id " + std::to_string(to_index(r.id)) +
                      " is negative or not finite");
      if (!routed.insert(r.id).second)
        report(i, "routing lists id " + std::to_string(to_index(r.id)) + " twice");
      if (to_index(r.id) >= trace.universe)
        report(i, "routing id " + std::to_string(to_index(r.id)) + " >= universe " +
                      std::to_string(trace.universe));
    }
    std::set<SubModuleId> seen;
    for (auto id : ev.required) {
      if (!seen.insert(id).second)
        report(i, "required lists id " + std::to_string(to_index(id)) + " twice");
      if (to_index(id) >= trace.universe)
        report(i, "required id " + std::to_string(to_index(id)) + " >= universe " +
                      std::to_string(trace.universe));
      if (!routed.contains(id))
        report(i, "required id " + std::to_string(to_index(id)) + " missing from routing");
    }
  }
  return out;
}

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::parse_error, "trace line " + std::to_string(line) + ": " + what);
}

SubModuleId parse_id(const json& v, std::size_t line) {
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() > UINT32_MAX)
    parse_fail(line, "id must be a non-negative 32-bit integer");
  return SubModuleId{v.get<std::uint32_t>()};
}

AccessEvent parse_event(const json& j, std::size_t line) {
  if (!j.is_object()) parse_fail(line, "event is not a JSON object");
  for (const auto& [key, _] : j.items())
    if (key != "step" && key != "required" && key != "routing")
      parse_fail(line, "unknown field '" + key + "'");
  if (!j.contains("step") || !j["step"].is_number_unsigned())
    parse_fail(line, "missing or non-integer 'step'");
  if (!j.contains("required") || !j["required"].is_array())
    parse_fail(line, "missing 'required' array");
  if (!j.contains("routing") || !j["routing"].is_array())
    parse_fail(line, "missing 'routing' array");

  AccessEvent ev;
  ev.step = j["step"].get<std::uint64_t>();
  for (const auto& v : j["required"]) ev.required.push_back(parse_id(v, line));
  std::sort(ev.required.begin(), ev.required.end());
  for (const auto& pair : j["routing"]) {
    if (!pair.is_array() || pair.size() != 2 || !pair[1].is_number())
      parse_fail(line, "routing entries must be [id, weight] pairs");
    ev.routing.push_back({parse_id(pair[0], line), pair[1].get<double>()});
  }
  return ev;
}

std::uint32_t implied_universe(const Trace& t) {
  std::uint32_t u = 0;
  for (const auto& ev : t.events) {
    for (auto id : ev.required) u = std::max(u, to_index(id) + 1);
    for (const auto& r : ev.routing) u = std::max(u, to_index(r.id) + 1);
  }
  return u;
}

}  // namespace

Trace parse_trace(std::istream& in, const std::string& provenance) {
  Trace trace;
  trace.provenance = provenance;
  bool header_seen = false;
  bool first_content = true;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      parse_fail(line, std::string("malformed JSON (") + e.what() + ")");
    }
    if (first_content && j.is_object() && j.contains("universe") && !j.contains("step")) {
      if (!j["universe"].is_number_unsigned()) parse_fail(line, "header 'universe' must be an integer");
      trace.universe = j["universe"].get<std::uint32_t>();
      if (j.contains("provenance") && j["provenance"].is_string())
        trace.provenance = j["provenance"].get<std::string>();
      header_seen = true;
      first_content = false;
      continue;
    }
    first_content = false;
    trace.events.push_back(parse_event(j, line));
    trace.source_lines.push_back(line);
  }
  if (!header_seen) trace.universe = implied_universe(trace);

  auto violations = validate_trace(trace);
  if (!violations.empty()) {
    std::string msg = "trace failed validation:";
    for (const auto& v : violations) msg += "\n  line " + std::to_string(v.line) + ": " + v.message;
    throw Error(ErrorCode::validation_error, msg);
  }
  return trace;
}

Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open trace file " + path.string());
  return parse_trace(in, path.string());
}

void write_trace(std::ostream& out, const Trace& trace) {
  out << json{{"universe", trace.universe}, {"provenance", trace.provenance}}.dump() << '\n';
  for (const auto& ev : trace.events) {
    json req = json::array();
    for (auto id : ev.required) req.push_back(to_index(id));
    json routing = json::array();
    for (const auto& r : ev.routing) routing.push_back(json::array({to_index(r.id), r.weight}));
    // fixed key order: step, required, routing
    out << "{\"step\":" << ev.step << ",\"required\":" << req.dump()
        << ",\"routing\":" << routing.dump() << "}\n";
  }
}

void write_trace(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write trace file " + path.string());
  write_trace(out, trace);
}

std::string serialize_trace(const Trace& trace) {
  std::ostringstream out;
  write_trace(out, trace);
  return out.str();
}

}  // namespace rotary
