#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rotary/residency.hpp"

namespace rotary {

/// One router output entry: a routable id and its (non-negative) weight.
struct RoutingEntry {
  SubModuleId id{};
  double weight = 0.0;

  friend bool operator==(const RoutingEntry&, const RoutingEntry&) = default;
};

/// One decoded token: the experts it executes plus the router weights.
struct AccessEvent {
  std::uint64_t step = 0;
  std::vector<SubModuleId> required;  // kept sorted ascending
  std::vector<RoutingEntry> routing;

  friend bool operator==(const AccessEvent&, const AccessEvent&) = default;
};

struct Trace {
  std::vector<AccessEvent> events;
  std::uint32_t universe = 0;
  std::string provenance;
  // 1-based source line of each event when read from a file; empty otherwise.
  std::vector<std::size_t> source_lines;

  std::size_t size() const noexcept { return events.size(); }
  bool operator==(const Trace& other) const {
    return events == other.events && universe == other.universe &&
           provenance == other.provenance;
  }
};

struct TraceViolation {
  std::size_t line = 0;  // 1-based line (or event ordinal + 1 for in-memory traces)
  std::string message;
};

inline constexpr double kDefaultPhaseAffinity = 0.6;

Trace gen_uniform(std::uint64_t steps, std::uint32_t universe, std::uint32_t top_k,
                  std::uint64_t seed);

/// Top-k ids per step drawn without replacement with P(id) proportional to
/// 1 / (id + 1)^s. s = 0 is the uniform distribution.
Trace gen_zipf(std::uint64_t steps, std::uint32_t universe, std::uint32_t top_k, double s,
               std::uint64_t seed);

/// Round-robin phases, each emitted `phase_len` steps, the whole cycle
/// repeated `repeats` times. Inside a phase the singleton required id cycles
/// through the phase set in ascending order. The router gives weight 1 to the
/// required id and `affinity` to the other members of the active phase.
Trace gen_phased(const std::vector<std::vector<SubModuleId>>& phase_sets,
                 std::uint64_t phase_len, std::uint64_t repeats, std::uint64_t seed,
                 double affinity = kDefaultPhaseAffinity);

std::vector<TraceViolation> validate_trace(const Trace& trace);

/// Parses JSON Lines. Throws Error(parse_error) naming the line for malformed
/// input and Error(validation_error) listing every invariant breach.
Trace parse_trace(std::istream& in, const std::string& provenance);
Trace read_trace(const std::filesystem::path& path);

/// Writes the optional header line followed by one event per line.
void write_trace(std::ostream& out, const Trace& trace);
void write_trace(const std::filesystem::path& path, const Trace& trace);
std::string serialize_trace(const Trace& trace);

}  // namespace rotary
