#include "rotary/policies.hpp"

#include <algorithm>
#include <limits>
#include <list>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "rng.hpp"
#include "rotary/error.hpp"

namespace rotary {

std::string_view to_string(PolicyName name) noexcept {
  switch (name) {
    case PolicyName::rotary: return "rotary";
    case PolicyName::lru: return "lru";
    case PolicyName::fifo: return "fifo";
    case PolicyName::random: return "random";
    case PolicyName::belady: return "belady";
  }
  return "lru";
}

PolicyName parse_policy_name(std::string_view text) {
  for (auto name : {PolicyName::rotary, PolicyName::lru, PolicyName::fifo, PolicyName::random,
                    PolicyName::belady})
    if (text == to_string(name)) return name;
  throw Error(ErrorCode::invalid_argument,
              "unknown policy '" + std::string(text) + "' (expected rotary|lru|fifo|random|belady)");
}

namespace {

bool contains(std::span<const SubModuleId> ids, SubModuleId id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

bool eligible(const ResidencyState& state, SlotIndex slot, std::span<const SubModuleId> in_use) {
  auto occ = state.slots().occupant(slot);
  return !occ || !contains(in_use, *occ);
}

std::optional<SlotIndex> first_empty(const ResidencyState& state, SlotIndex start = 0) {
  const std::size_t n = state.slots().capacity();
  for (std::size_t i = 0; i < n; ++i) {
    const SlotIndex s = (start + i) % n;
    if (!state.slots().occupant(s)) return s;
  }
  return std::nullopt;
}

[[noreturn]] void no_victim() {
  throw Error(ErrorCode::infeasible_trace,
              "every slot holds a sub-module required by the current token");
}

// Shared shape of the demand-only baselines: empty slot first, otherwise the
// eligible slot with the smallest score (lowest index on ties).
template <typename Score>
SlotIndex min_score_victim(const ResidencyState& state, std::span<const SubModuleId> in_use,
                           Score score) {
  if (auto empty = first_empty(state)) return *empty;
  std::optional<SlotIndex> best;
  for (SlotIndex s = 0; s < state.slots().capacity(); ++s) {
    if (!eligible(state, s, in_use)) continue;
    if (!best || score(s) < score(*best)) best = s;
  }
  if (!best) no_victim();
  return *best;
}

class LruPolicy final : public Policy {
 public:
  explicit LruPolicy(std::size_t slots) : last_use_(slots, 0) {}

  PolicyName name() const noexcept override { return PolicyName::lru; }

  Plan plan_prefetch(const AccessEvent&, ResidencyState&) override {
    return {{}, VictimRule::empty_then_least_recent, std::nullopt};
  }

  SlotIndex choose_victim(ResidencyState& state, const SubModule&,
                          std::span<const SubModuleId> in_use) override {
    return min_score_victim(state, in_use, [this](SlotIndex s) { return last_use_[s]; });
  }

  void on_load(SlotIndex slot, SubModuleId) override { last_use_[slot] = ++tick_; }
  void on_access(SlotIndex slot, SubModuleId) override { last_use_[slot] = ++tick_; }

 private:
  std::vector<std::uint64_t> last_use_;
  std::uint64_t tick_ = 0;
};

class FifoPolicy final : public Policy {
 public:
  explicit FifoPolicy(std::size_t slots) : loaded_at_(slots, 0) {}

  PolicyName name() const noexcept override { return PolicyName::fifo; }

  Plan plan_prefetch(const AccessEvent&, ResidencyState&) override {
    return {{}, VictimRule::empty_then_oldest_load, std::nullopt};
  }

  SlotIndex choose_victim(ResidencyState& state, const SubModule&,
                          std::span<const SubModuleId> in_use) override {
    return min_score_victim(state, in_use, [this](SlotIndex s) { return loaded_at_[s]; });
  }

  void on_load(SlotIndex slot, SubModuleId) override { loaded_at_[slot] = ++tick_; }

 private:
  std::vector<std::uint64_t> loaded_at_;
  std::uint64_t tick_ = 0;
};

class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}

  PolicyName name() const noexcept override { return PolicyName::random; }

  Plan plan_prefetch(const AccessEvent&, ResidencyState&) override {
    return {{}, VictimRule::empty_then_seeded_uniform, std::nullopt};
  }

  SlotIndex choose_victim(ResidencyState& state, const SubModule&,
                          std::span<const SubModuleId> in_use) override {
    if (auto empty = first_empty(state)) return *empty;
    std::vector<SlotIndex> candidates;
    for (SlotIndex s = 0; s < state.slots().capacity(); ++s)
      if (eligible(state, s, in_use)) candidates.push_back(s);
    if (candidates.empty()) no_victim();
    return candidates[rng_.below(candidates.size())];
  }

 private:
  detail::Rng rng_;
};

class BeladyPolicy final : public Policy {
 public:
  explicit BeladyPolicy(const Trace& trace) {
    for (std::size_t i = 0; i < trace.events.size(); ++i)
      for (auto id : trace.events[i].required) uses_[id].push_back(i);
  }

  PolicyName name() const noexcept override { return PolicyName::belady; }

  void begin_event(std::size_t ordinal) override { current_ = ordinal; }

  Plan plan_prefetch(const AccessEvent&, ResidencyState&) override {
    return {{}, VictimRule::empty_then_farthest_next_use, std::nullopt};
  }

  SlotIndex choose_victim(ResidencyState& state, const SubModule&,
                          std::span<const SubModuleId> in_use) override {
    if (auto empty = first_empty(state)) return *empty;
    std::optional<SlotIndex> best;
    std::size_t best_next = 0;
    for (SlotIndex s = 0; s < state.slots().capacity(); ++s) {
      if (!eligible(state, s, in_use)) continue;
      const std::size_t next = next_use(*state.slots().occupant(s));
      if (!best || next > best_next) {
        best = s;
        best_next = next;
      }
    }
    if (!best) no_victim();
    return *best;
  }

 private:
  std::size_t next_use(SubModuleId id) const {
    auto it = uses_.find(id);
    if (it == uses_.end()) return std::numeric_limits<std::size_t>::max();
    auto pos = std::upper_bound(it->second.begin(), it->second.end(), current_);
    return pos == it->second.end() ? std::numeric_limits<std::size_t>::max() : *pos;
  }

  std::unordered_map<SubModuleId, std::vector<std::size_t>> uses_;
  std::size_t current_ = 0;
};

class RotaryPolicy final : public Policy {
 public:
  RotaryPolicy(const RotaryParams& params, std::size_t dimensions, std::size_t slots)
      : controller_(params, dimensions, slots) {}

  PolicyName name() const noexcept override { return PolicyName::rotary; }

  Plan plan_prefetch(const AccessEvent& event, ResidencyState& state) override {
    Plan plan;
    plan.demand_slot_chooser = VictimRule::empty_then_head;
    pending_.clear();

    const RotationDecision decision = controller_.observe(event, state);
    plan.rotation = decision;
    switch (decision.kind) {
      case RotationDecision::Kind::hold:
        break;
      case RotationDecision::Kind::forward: {
        auto traversed = state.rotate_forward(decision.k);
        pending_.assign(traversed.begin(), traversed.end());
        break;
      }
      case RotationDecision::Kind::restore:
        if (const Snapshot* snap = controller_.ring().find(decision.snapshot_id))
          plan.prefetch_loads = restore_loads(*snap, event, state);
        break;
    }
    return plan;
  }

  SlotIndex choose_victim(ResidencyState& state, const SubModule&,
                          std::span<const SubModuleId> in_use) override {
    const std::size_t n = state.slots().capacity();
    const SlotIndex cursor = pending_.empty() ? state.slots().head() : pending_.front();
    if (auto empty = first_empty(state, cursor)) {
      std::erase(pending_, *empty);
      return *empty;
    }
    while (!pending_.empty()) {
      const SlotIndex s = pending_.front();
      pending_.erase(pending_.begin());
      if (eligible(state, s, in_use)) return s;
    }
    // Slot at the head, then the head advances past it.
    const SlotIndex head = state.slots().head();
    for (std::size_t i = 0; i < n; ++i) {
      const SlotIndex s = (head + i) % n;
      if (eligible(state, s, in_use)) {
        state.rotate_forward(i + 1);
        return s;
      }
    }
    no_victim();
  }

  const RotationController& controller() const noexcept { return controller_; }

 private:
  static std::vector<PrefetchLoad> restore_loads(const Snapshot& snap, const AccessEvent& event,
                                                 const ResidencyState& state) {
    std::unordered_set<SubModuleId> members;
    for (const auto& [slot, id] : snap.assignment) members.insert(id);
    auto movable = [&](SlotIndex s) {
      auto occ = state.slots().occupant(s);
      return !occ || (!members.contains(*occ) &&
                      !std::binary_search(event.required.begin(), event.required.end(), *occ));
    };

    std::vector<PrefetchLoad> loads;
    std::set<SlotIndex> used;
    const std::size_t n = state.slots().capacity();
    for (const auto& [slot, id] : snap.assignment) {
      if (state.is_resident(id)) continue;
      std::optional<SlotIndex> target;
      if (slot < n && !used.contains(slot) && movable(slot)) {
        target = slot;
      } else {
        for (SlotIndex s = 0; s < n; ++s)
          if (!used.contains(s) && movable(s)) {
            target = s;
            break;
          }
      }
      if (!target) continue;
      used.insert(*target);
      loads.push_back({*target, id});
    }
    return loads;
  }

  RotationController controller_;
  std::vector<SlotIndex> pending_;
};

}  // namespace

std::unique_ptr<Policy> make_policy(const PolicyKind& kind, std::size_t dimensions,
                                    std::size_t slot_count, const Trace* trace) {
  if (slot_count == 0) throw Error(ErrorCode::invalid_argument, "slot count must be >= 1");
  switch (kind.name) {
    case PolicyName::lru: return std::make_unique<LruPolicy>(slot_count);
    case PolicyName::fifo: return std::make_unique<FifoPolicy>(slot_count);
    case PolicyName::random: return std::make_unique<RandomPolicy>(kind.seed);
    case PolicyName::belady:
      if (!trace)
        throw Error(ErrorCode::invalid_argument, "belady needs the full trace (offline policy)");
      return std::make_unique<BeladyPolicy>(*trace);
    case PolicyName::rotary:
      return std::make_unique<RotaryPolicy>(kind.rotary, dimensions, slot_count);
  }
  throw Error(ErrorCode::invalid_argument, "unknown policy");
}

namespace {

std::vector<SubModuleId> flatten(const Trace& trace, std::size_t capacity) {
  if (capacity == 0) throw Error(ErrorCode::invalid_argument, "capacity must be >= 1");
  std::vector<SubModuleId> seq;
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const auto& req = trace.events[i].required;
    if (req.size() > capacity)
      throw Error(ErrorCode::infeasible_trace,
                  "event " + std::to_string(i) + " requires " + std::to_string(req.size()) +
                      " sub-modules but capacity is " + std::to_string(capacity));
    seq.insert(seq.end(), req.begin(), req.end());
  }
  return seq;
}

}  // namespace

std::uint64_t belady_misses(const Trace& trace, std::size_t capacity) {
  const auto seq = flatten(trace, capacity);
  constexpr std::size_t never = std::numeric_limits<std::size_t>::max();

  std::vector<std::size_t> next(seq.size(), never);
  std::unordered_map<SubModuleId, std::size_t> last_seen;
  for (std::size_t p = seq.size(); p-- > 0;) {
    auto it = last_seen.find(seq[p]);
    if (it != last_seen.end()) next[p] = it->second;
    last_seen[seq[p]] = p;
  }

  // (next use, id) ordered so the farthest is at the back.
  std::set<std::pair<std::size_t, std::uint32_t>> by_next;
  std::unordered_map<SubModuleId, std::size_t> cached;  // id -> its key's next use
  std::uint64_t misses = 0;
  for (std::size_t p = 0; p < seq.size(); ++p) {
    const SubModuleId id = seq[p];
    auto it = cached.find(id);
    if (it != cached.end()) {
      by_next.erase({it->second, to_index(id)});
    } else {
      ++misses;
      if (cached.size() == capacity) {
        auto victim = std::prev(by_next.end());
        cached.erase(SubModuleId{victim->second});
        by_next.erase(victim);
      }
    }
    cached[id] = next[p];
    by_next.insert({next[p], to_index(id)});
  }
  return misses;
}

std::uint64_t lru_reference(const Trace& trace, std::size_t capacity) {
  const auto seq = flatten(trace, capacity);
  std::list<SubModuleId> recency;  // front = most recent
  std::uint64_t misses = 0;
  for (auto id : seq) {
    auto it = std::find(recency.begin(), recency.end(), id);
    if (it != recency.end()) {
      recency.erase(it);
    } else {
      ++misses;
      if (recency.size() == capacity) recency.pop_back();
    }
    recency.push_front(id);
  }
  return misses;
}

}  // namespace rotary
