#pragma once

// Independent reference models for the replacement-policy tests. Everything
// here works on the flattened access sequence (required ids of each event in
// ascending order) with unit-size slots.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "rotary/workloads.hpp"

namespace oracle {

struct Access {
  std::uint32_t id;
  std::size_t event;
};

inline std::vector<Access> flatten(const rotary::Trace& t) {
  std::vector<Access> out;
  for (std::size_t e = 0; e < t.events.size(); ++e)
    for (auto id : t.events[e].required) out.push_back({rotary::to_index(id), e});
  return out;
}

inline rotary::Trace singleton_trace(const std::vector<std::uint32_t>& ids) {
  rotary::Trace t;
  std::uint32_t universe = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    rotary::AccessEvent ev;
    ev.step = i;
    ev.required = {rotary::SubModuleId{ids[i]}};
    ev.routing = {{rotary::SubModuleId{ids[i]}, 1.0}};
    t.events.push_back(ev);
    universe = std::max(universe, ids[i] + 1);
  }
  t.universe = universe;
  return t;
}

// Minimum misses over every eviction choice, by memoised search over
// (position, cache contents). With `pin_event`, ids already served for the
// current event may not be evicted. Exponential; keep traces tiny.
inline std::uint64_t exhaustive_min(const rotary::Trace& t, std::size_t cap,
                                    bool pin_event = false) {
  const auto acc = flatten(t);
  std::map<std::pair<std::size_t, std::set<std::uint32_t>>, std::uint64_t> memo;
  std::function<std::uint64_t(std::size_t, const std::set<std::uint32_t>&)> go =
      [&](std::size_t i, const std::set<std::uint32_t>& cache) -> std::uint64_t {
    if (i == acc.size()) return 0;
    auto key = std::make_pair(i, cache);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::uint64_t best;
    if (cache.count(acc[i].id)) {
      best = go(i + 1, cache);
    } else if (cache.size() < cap) {
      auto next = cache;
      next.insert(acc[i].id);
      best = 1 + go(i + 1, next);
    } else {
      best = UINT64_MAX;
      for (auto victim : cache) {
        bool pinned = false;
        for (std::size_t j = i; pin_event && j-- > 0 && acc[j].event == acc[i].event;)
          if (acc[j].id == victim) pinned = true;
        if (pinned) continue;
        auto next = cache;
        next.erase(victim);
        next.insert(acc[i].id);
        best = std::min(best, 1 + go(i + 1, next));
      }
    }
    memo.emplace(std::move(key), best);
    return best;
  };
  return go(0, {});
}

// Straight LRU with an explicit recency vector; front is most recent.
inline std::uint64_t lru(const rotary::Trace& t, std::size_t cap) {
  std::vector<std::uint32_t> order;
  std::uint64_t misses = 0;
  for (const auto& a : flatten(t)) {
    auto it = std::find(order.begin(), order.end(), a.id);
    if (it != order.end()) {
      order.erase(it);
    } else {
      ++misses;
      if (order.size() == cap) order.pop_back();
    }
    order.insert(order.begin(), a.id);
  }
  return misses;
}

}  // namespace oracle
