#include "rotary/scenario.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "rotary/error.hpp"
#include "rotary/gguf.hpp"
#include "rotary/layout_io.hpp"

namespace rotary {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::set<std::string, std::less<>> kRequired = {
    "layout", "policy", "slot_count", "per_slot_limit_bytes", "context_length",
    "compute_per_token_s", "h2d_bandwidth_bytes_per_s", "device_budget_bytes",
    "host_budget_bytes"};

const std::set<std::string, std::less<>> kOptional = {
    "trace", "seed", "host_pinned_layers", "per_transfer_latency_s", "overlap_factor",
    "fixed_overhead_bytes", "kv_bytes_per_token", "host_transient_factor",
    "rotary.lambda", "rotary.tau", "rotary.k_step", "rotary.history",
    "rotary.snapshot_period", "rotary.tau_boundary"};

struct Entry {
  std::string value;
  std::size_t line;
};

class Reader {
 public:
  explicit Reader(std::map<std::string, Entry> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  const std::string& text(const std::string& key) const { return kv_.at(key).value; }

  std::uint64_t u64(const std::string& key) const {
    const auto& e = kv_.at(key);
    if (!e.value.empty() && e.value.front() == '-') negative(key, e);
    std::uint64_t v = 0;
    const char* end = e.value.data() + e.value.size();
    auto [p, ec] = std::from_chars(e.value.data(), end, v);
    if (ec != std::errc{} || p != end)
      fail(e, key + ": expected a non-negative integer, got '" + e.value + "'");
    return v;
  }

  double real(const std::string& key) const {
    const auto& e = kv_.at(key);
    double v = 0;
    const char* end = e.value.data() + e.value.size();
    auto [p, ec] = std::from_chars(e.value.data(), end, v);
    if (ec != std::errc{} || p != end)
      fail(e, key + ": expected a number, got '" + e.value + "'");
    if (v < 0) negative(key, e);
    return v;
  }

 private:
  [[noreturn]] static void fail(const Entry& e, const std::string& msg) {
    throw Error(ErrorCode::parse_error, "line " + std::to_string(e.line) + ": " + msg);
  }
  [[noreturn]] static void negative(const std::string& key, const Entry& e) {
    throw Error(ErrorCode::invalid_scenario,
                "line " + std::to_string(e.line) + ": " + key + " must be non-negative");
  }

  std::map<std::string, Entry> kv_;
};

ModelLayout load_layout(const std::filesystem::path& p) {
  if (p.extension() == ".gguf") {
    auto tensors = gguf::read_tensor_table(p);
    return gguf::build_layout(tensors, gguf::ExpertClassifier{}).layout;
  }
  return read_layout(p);
}

}  // namespace

ScenarioFile parse_scenario(std::istream& in, const std::filesystem::path& base_dir) {
  std::map<std::string, Entry> kv;
  std::string section;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line(raw);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error(ErrorCode::parse_error, "line " + std::to_string(lineno) + ": bad section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "rotary")
        throw Error(ErrorCode::invalid_scenario,
                    "line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::parse_error,
                  "line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty() || value.empty())
      throw Error(ErrorCode::parse_error,
                  "line " + std::to_string(lineno) + ": empty key or value");
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;

    if (!kRequired.count(key) && !kOptional.count(key))
      throw Error(ErrorCode::invalid_scenario,
                  "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (kv.count(key))
      throw Error(ErrorCode::invalid_scenario,
                  "line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv.emplace(std::move(key), Entry{std::move(value), lineno});
  }

  std::string missing;
  for (const auto& k : kRequired)
    if (!kv.count(k)) missing += (missing.empty() ? "" : ", ") + k;
  if (!missing.empty())
    throw Error(ErrorCode::invalid_scenario, "missing required keys: " + missing);

  Reader r(std::move(kv));
  ScenarioFile out;
  auto resolve = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() ? p : base_dir / p;
  };

  ScenarioConfig& c = out.config;
  try {
    c.policy.name = parse_policy_name(r.text("policy"));
  } catch (const Error& e) {
    throw Error(ErrorCode::invalid_scenario, e.what());
  }
  c.slot_count = r.u64("slot_count");
  c.per_slot_limit = r.u64("per_slot_limit_bytes");
  c.context_length = r.u64("context_length");
  c.cost.compute_per_token = r.real("compute_per_token_s");
  c.cost.h2d_bandwidth = r.real("h2d_bandwidth_bytes_per_s");
  c.memory.device_budget = r.u64("device_budget_bytes");
  c.memory.host_budget = r.u64("host_budget_bytes");

  if (r.has("seed")) c.seed = r.u64("seed");
  c.policy.seed = c.seed;
  if (r.has("host_pinned_layers")) c.host_pinned_layers = r.u64("host_pinned_layers");
  if (r.has("per_transfer_latency_s")) c.cost.per_transfer_latency = r.real("per_transfer_latency_s");
  if (r.has("overlap_factor")) c.cost.overlap_factor = r.real("overlap_factor");
  if (r.has("fixed_overhead_bytes")) c.memory.fixed_overhead = r.u64("fixed_overhead_bytes");
  if (r.has("kv_bytes_per_token")) c.memory.kv_bytes_per_token = r.u64("kv_bytes_per_token");
  if (r.has("host_transient_factor"))
    c.memory.host_transient_factor = r.real("host_transient_factor");

  RotaryParams& rp = c.policy.rotary;
  if (r.has("rotary.lambda")) rp.lambda = r.real("rotary.lambda");
  if (r.has("rotary.tau")) rp.tau = r.real("rotary.tau");
  if (r.has("rotary.k_step")) rp.k_step = static_cast<std::uint32_t>(r.u64("rotary.k_step"));
  if (r.has("rotary.history")) rp.history = r.u64("rotary.history");
  if (r.has("rotary.snapshot_period")) rp.snapshot_period = static_cast<std::uint32_t>(r.u64("rotary.snapshot_period"));
  if (r.has("rotary.tau_boundary")) rp.tau_boundary = r.real("rotary.tau_boundary");

  if (r.has("trace")) out.trace = resolve(r.text("trace"));
  out.layout_path = resolve(r.text("layout"));
  c.layout = load_layout(out.layout_path);

  c.validate();
  return out;
}

ScenarioFile load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open scenario " + path.string());
  return parse_scenario(in, path.parent_path());
}

}  // namespace rotary
