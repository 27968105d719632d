#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rotary/residency.hpp"
#include "rotary/rotation.hpp"
#include "rotary/workloads.hpp"

namespace rotary {

enum class PolicyName { rotary, lru, fifo, random, belady };

std::string_view to_string(PolicyName name) noexcept;
/// Throws Error(invalid_argument) for unknown names.
PolicyName parse_policy_name(std::string_view text);

struct PolicyKind {
  PolicyName name = PolicyName::lru;
  RotaryParams rotary{};    // used when name == rotary
  std::uint64_t seed = 0;   // used when name == random
};

/// Which deterministic rule picks the demand slot on a miss.
enum class VictimRule {
  empty_then_least_recent,
  empty_then_oldest_load,
  empty_then_seeded_uniform,
  empty_then_head,
  empty_then_farthest_next_use,
};

struct PrefetchLoad {
  SlotIndex slot = 0;
  SubModuleId id{};

  friend bool operator==(const PrefetchLoad&, const PrefetchLoad&) = default;
};

struct Plan {
  std::vector<PrefetchLoad> prefetch_loads;
  VictimRule demand_slot_chooser = VictimRule::empty_then_least_recent;
  std::optional<RotationDecision> rotation;
};

/// Residency policy driven by the simulation engine. One instance per run.
///
/// Per token the engine calls begin_event(), then plan_prefetch() (which may
/// move the slot-group head), applies the prefetch loads, and then serves the
/// required ids in ascending order, calling choose_victim() on each miss.
/// Slots whose occupant is in `in_use` (ids already served for this token)
/// are never chosen.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual PolicyName name() const noexcept = 0;

  virtual void begin_event(std::size_t /*ordinal*/) {}
  virtual Plan plan_prefetch(const AccessEvent& event, ResidencyState& state) = 0;
  virtual SlotIndex choose_victim(ResidencyState& state, const SubModule& incoming,
                                  std::span<const SubModuleId> in_use) = 0;
  virtual void on_load(SlotIndex /*slot*/, SubModuleId /*id*/) {}
  virtual void on_access(SlotIndex /*slot*/, SubModuleId /*id*/) {}
};

/// `trace` is required for belady (offline) and ignored otherwise.
/// `dimensions` sizes the rotary controller's context signature.
std::unique_ptr<Policy> make_policy(const PolicyKind& kind, std::size_t dimensions,
                                    std::size_t slot_count, const Trace* trace = nullptr);

/// Miss count of clairvoyant demand-only MIN over the trace's accesses
/// (required ids of each event in ascending order), unit-size slots.
/// Throws Error(infeasible_trace) if an event needs more than `capacity` ids.
std::uint64_t belady_misses(const Trace& trace, std::size_t capacity);

/// Miss count of a naive list-based LRU over the same access sequence.
std::uint64_t lru_reference(const Trace& trace, std::size_t capacity);

}  // namespace rotary
