#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "rotary/error.hpp"
#include "rotary/policies.hpp"

using namespace rotary;

namespace {

SubModuleId sid(std::uint32_t i) { return SubModuleId{i}; }

ModelLayout unit_layout(std::uint32_t n) {
  std::vector<SubModule> subs;
  for (std::uint32_t i = 0; i < n; ++i) subs.push_back({sid(i), 1, SubModuleKind::expert, 0, i});
  return ModelLayout(subs, {});
}

AccessEvent event(std::uint64_t step, std::vector<std::uint32_t> req,
                  std::vector<std::pair<std::uint32_t, double>> routing = {}) {
  AccessEvent ev;
  ev.step = step;
  for (auto r : req) ev.required.push_back(sid(r));
  if (routing.empty())
    for (auto r : req) routing.push_back({r, 1.0});
  for (auto [id, w] : routing) ev.routing.push_back({sid(id), w});
  return ev;
}

// Same per-token protocol as the engine, minus the cost accounting.
struct Driver {
  const ModelLayout& layout;
  ResidencyState state;
  std::unique_ptr<Policy> policy;
  std::size_t ordinal = 0;
  std::uint64_t misses = 0;

  Driver(const ModelLayout& l, std::size_t slots, PolicyKind kind, const Trace* trace = nullptr)
      : layout(l),
        state(l, SlotGroup(slots, 1), 1'000'000),
        policy(make_policy(kind, l.submodules().size(), slots, trace)) {}

  Plan step(const AccessEvent& ev) {
    policy->begin_event(ordinal++);
    Plan plan = policy->plan_prefetch(ev, state);
    for (const auto& load : plan.prefetch_loads) {
      state.assign(load.slot, *layout.find(load.id));
      policy->on_load(load.slot, load.id);
    }
    std::vector<SubModuleId> in_use;
    for (auto id : ev.required) {
      if (auto slot = state.lookup(id)) {
        policy->on_access(*slot, id);
      } else {
        ++misses;
        const auto victim = policy->choose_victim(state, *layout.find(id), in_use);
        state.assign(victim, *layout.find(id));
        policy->on_load(victim, id);
        policy->on_access(victim, id);
      }
      in_use.push_back(id);
    }
    return plan;
  }
};

PolicyKind kind_of(PolicyName n, std::uint64_t seed = 0) {
  PolicyKind k;
  k.name = n;
  k.seed = seed;
  return k;
}

}  // namespace

TEST(PolicyName, RoundTrip) {
  for (auto n : {PolicyName::rotary, PolicyName::lru, PolicyName::fifo, PolicyName::random,
                 PolicyName::belady})
    EXPECT_EQ(parse_policy_name(to_string(n)), n);
  EXPECT_THROW(parse_policy_name("mru"), Error);
}

TEST(Policies, BaselinesPlanNothing) {
  auto layout = unit_layout(4);
  auto trace = oracle::singleton_trace({0, 1});
  for (auto n : {PolicyName::lru, PolicyName::fifo, PolicyName::random, PolicyName::belady}) {
    Driver d(layout, 2, kind_of(n), &trace);
    const auto plan = d.step(trace.events[0]);
    EXPECT_TRUE(plan.prefetch_loads.empty());
    EXPECT_FALSE(plan.rotation);
  }
}

TEST(Policies, EmptySlotFirst) {
  auto layout = unit_layout(4);
  auto trace = oracle::singleton_trace({0, 1, 2});
  for (auto n : {PolicyName::lru, PolicyName::fifo, PolicyName::random, PolicyName::belady,
                 PolicyName::rotary}) {
    Driver d(layout, 4, kind_of(n), &trace);
    d.state.assign(0, *layout.find(sid(3)));
    d.state.assign(2, *layout.find(sid(2)));
    d.policy->begin_event(0);
    const auto slot = d.policy->choose_victim(d.state, *layout.find(sid(0)), {});
    EXPECT_TRUE(slot == 1 || slot == 3) << to_string(n);
    EXPECT_FALSE(d.state.slots().occupant(slot)) << to_string(n);
  }
}

TEST(Policies, LruEvictsLeastRecent) {
  auto layout = unit_layout(4);
  Driver d(layout, 3, kind_of(PolicyName::lru));
  for (std::uint32_t i = 0; i < 3; ++i) d.step(event(i, {i}));
  const auto slot_of_a = *d.state.lookup(sid(0));
  d.policy->begin_event(3);
  EXPECT_EQ(d.policy->choose_victim(d.state, *layout.find(sid(3)), {}), slot_of_a);
}

TEST(Policies, BeladyEvictsNeverUsedAgain) {
  auto layout = unit_layout(4);
  auto trace = oracle::singleton_trace({2, 3, 1, 2});
  Driver d(layout, 2, kind_of(PolicyName::belady), &trace);
  d.step(trace.events[0]);
  d.step(trace.events[1]);
  const auto slot_of_3 = *d.state.lookup(sid(3));
  d.policy->begin_event(2);
  EXPECT_EQ(d.policy->choose_victim(d.state, *layout.find(sid(1)), {}), slot_of_3);
  EXPECT_THROW(make_policy(kind_of(PolicyName::belady), 4, 2, nullptr), Error);
}

TEST(Policies, InUseSlotsAreProtected) {
  auto layout = unit_layout(4);
  for (auto n : {PolicyName::lru, PolicyName::fifo, PolicyName::random, PolicyName::rotary}) {
    Driver d(layout, 2, kind_of(n, 3));
    d.step(event(0, {0, 1}));
    const std::vector<SubModuleId> in_use = {sid(0)};
    d.policy->begin_event(1);
    const auto slot = d.policy->choose_victim(d.state, *layout.find(sid(2)), in_use);
    EXPECT_EQ(d.state.slots().occupant(slot), sid(1)) << to_string(n);
    const std::vector<SubModuleId> both = {sid(0), sid(1)};
    EXPECT_THROW(d.policy->choose_victim(d.state, *layout.find(sid(2)), both), Error);
  }
}

TEST(Policies, RotaryHoldsWhenEverythingIsResident) {
  auto layout = unit_layout(4);
  Driver d(layout, 2, kind_of(PolicyName::rotary));
  d.step(event(0, {0}));
  const auto plan = d.step(event(1, {0}));
  ASSERT_TRUE(plan.rotation);
  EXPECT_EQ(*plan.rotation, RotationDecision::hold());
  EXPECT_TRUE(plan.prefetch_loads.empty());
}

TEST(Policies, RotaryForwardsOnMiss) {
  auto layout = unit_layout(4);
  Driver d(layout, 4, kind_of(PolicyName::rotary));
  const auto plan = d.step(event(0, {2}));
  ASSERT_TRUE(plan.rotation);
  EXPECT_EQ(*plan.rotation, RotationDecision::forward(1));
  EXPECT_EQ(d.state.slots().head(), 1u);
}

TEST(Policies, RotaryRestoreLoadsOnlyMissingMembers) {
  auto layout = unit_layout(3);
  Driver d(layout, 2, kind_of(PolicyName::rotary));
  const std::vector<std::pair<std::uint32_t, double>> ab = {{0, 1.0}, {1, 1.0}};
  d.step(event(0, {0}, ab));
  d.step(event(1, {1}, ab));
  const auto before = d.state.assignment();  // {A, B}
  d.step(event(2, {2}, {{2, 1.0}}));         // new context evicts one of them

  std::optional<PrefetchLoad> expected;
  for (const auto& [slot, id] : before)
    if (!d.state.is_resident(id)) expected = PrefetchLoad{slot, id};
  ASSERT_TRUE(expected);

  const auto plan = d.step(event(3, {0}, ab));
  ASSERT_TRUE(plan.rotation);
  EXPECT_EQ(plan.rotation->kind, RotationDecision::Kind::restore);
  ASSERT_EQ(plan.prefetch_loads.size(), 1u);
  EXPECT_EQ(plan.prefetch_loads[0], *expected);
}

TEST(Policies, RandomIsSeeded) {
  auto layout = unit_layout(16);
  std::mt19937_64 rng(1);
  std::vector<std::uint32_t> ids;
  for (int i = 0; i < 200; ++i) ids.push_back(rng() % 16);
  auto trace = oracle::singleton_trace(ids);
  auto misses = [&](std::uint64_t seed) {
    Driver d(layout, 4, kind_of(PolicyName::random, seed));
    for (const auto& ev : trace.events) d.step(ev);
    return d.misses;
  };
  EXPECT_EQ(misses(9), misses(9));
}

TEST(BeladyMisses, WorkedExamples) {
  EXPECT_EQ(belady_misses(oracle::singleton_trace({1}), 1), 1u);
  const auto t = oracle::singleton_trace({1, 2, 3, 1, 2});
  EXPECT_EQ(oracle::exhaustive_min(t, 2), 4u);
  EXPECT_EQ(belady_misses(t, 2), 4u);
  EXPECT_EQ(oracle::lru(t, 2), 5u);
  const auto few = oracle::singleton_trace({4, 1, 4, 2, 1, 4});
  EXPECT_EQ(belady_misses(few, 3), 3u);
  EXPECT_EQ(belady_misses(Trace{}, 2), 0u);
}

TEST(BeladyMisses, InfeasibleEvent) {
  Trace t;
  t.universe = 4;
  t.events.push_back(event(0, {0, 1, 2}));
  try {
    belady_misses(t, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::infeasible_trace);
  }
  EXPECT_THROW(lru_reference(t, 2), Error);
}

TEST(BeladyMisses, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t cap = 1 + rng() % 3;
    const std::uint32_t universe = 2 + rng() % 4;
    Trace t;
    t.universe = universe;
    const std::size_t events = 1 + rng() % 9;
    for (std::size_t e = 0; e < events; ++e) {
      std::set<std::uint32_t> req;
      const std::size_t k = 1 + rng() % cap;
      while (req.size() < std::min<std::size_t>(k, universe)) req.insert(rng() % universe);
      t.events.push_back(event(e, {req.begin(), req.end()}));
    }
    ASSERT_EQ(belady_misses(t, cap), oracle::exhaustive_min(t, cap)) << "trial " << trial;
  }
}

TEST(LruReference, WorkedExamples) {
  EXPECT_EQ(lru_reference(oracle::singleton_trace({1, 1, 1}), 1), 1u);
  EXPECT_EQ(lru_reference(oracle::singleton_trace({1, 2, 3, 1, 2}), 2), 5u);
  EXPECT_EQ(lru_reference(Trace{}, 2), 0u);
}

TEST(LruReference, CompulsoryMissesOnly) {
  const auto t = oracle::singleton_trace({3, 1, 4, 1, 5, 3, 4, 5});
  EXPECT_EQ(lru_reference(t, 4), 4u);
  EXPECT_EQ(belady_misses(t, 4), 4u);
}

TEST(LruReference, MatchesListOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t cap = 1 + rng() % 6;
    std::vector<std::uint32_t> ids;
    for (int i = 0; i < 60; ++i) ids.push_back(rng() % 10);
    const auto t = oracle::singleton_trace(ids);
    ASSERT_EQ(lru_reference(t, cap), oracle::lru(t, cap));
  }
}
