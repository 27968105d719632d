#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace rotary {

using Bytes = std::uint64_t;
using SlotIndex = std::size_t;

/// Identifier of a loadable unit of weights. Unique within a ModelLayout.
enum class SubModuleId : std::uint32_t {};

constexpr std::uint32_t to_index(SubModuleId id) noexcept {
  return static_cast<std::uint32_t>(id);
}

enum class SubModuleKind { expert, shared };

struct SubModule {
  SubModuleId id{};
  Bytes size_bytes = 0;
  SubModuleKind kind = SubModuleKind::expert;
  std::uint32_t layer_index = 0;
  std::optional<std::uint32_t> expert_index;  // present iff kind == expert

  friend bool operator==(const SubModule&, const SubModule&) = default;
};

/// The host-tier view of a model: every sub-module with its byte size, plus
/// the shared blocks that never leave the device.
class ModelLayout {
 public:
  ModelLayout() = default;

  /// Validates ids, sizes, kinds and the mandatory set; throws
  /// Error(invalid_argument) on any violation.
  ModelLayout(std::vector<SubModule> submodules,
              std::vector<SubModuleId> mandatory_resident);

  const std::vector<SubModule>& submodules() const noexcept { return submodules_; }
  /// Sorted ascending.
  const std::vector<SubModuleId>& mandatory_resident() const noexcept {
    return mandatory_;
  }
  Bytes total_bytes() const noexcept { return total_bytes_; }
  Bytes mandatory_bytes() const noexcept { return mandatory_bytes_; }

  const SubModule* find(SubModuleId id) const;
  bool is_mandatory(SubModuleId id) const;

  /// Distinct layer indices that own at least one expert, ascending.
  std::vector<std::uint32_t> expert_layers() const;
  /// Bytes of all experts living in the first `count` expert-bearing layers.
  Bytes expert_bytes_in_first_layers(std::size_t count) const;

  friend bool operator==(const ModelLayout& a, const ModelLayout& b) {
    return a.submodules_ == b.submodules_ && a.mandatory_ == b.mandatory_;
  }

 private:
  std::vector<SubModule> submodules_;
  std::vector<SubModuleId> mandatory_;
  std::unordered_map<SubModuleId, std::size_t> index_;
  std::unordered_set<SubModuleId> mandatory_set_;
  Bytes total_bytes_ = 0;
  Bytes mandatory_bytes_ = 0;
};

/// N cyclically ordered device slots with a rotating head.
class SlotGroup {
 public:
  SlotGroup(std::size_t capacity, Bytes per_slot_limit);

  std::size_t capacity() const noexcept { return occupants_.size(); }
  SlotIndex head() const noexcept { return head_; }
  Bytes per_slot_limit() const noexcept { return per_slot_limit_; }
  std::optional<SubModuleId> occupant(SlotIndex slot) const;
  std::size_t occupied() const noexcept;

  /// Advances the head by k (mod N) and returns the k traversed slot indices
  /// in order; these are the refill candidates. Occupants do not move.
  std::vector<SlotIndex> rotate_forward(std::size_t k);
  void rotate_reverse(std::size_t k);

 private:
  friend class ResidencyState;

  std::vector<std::optional<SubModuleId>> occupants_;
  SlotIndex head_ = 0;
  Bytes per_slot_limit_;
};

class LookupTable {
 public:
  std::optional<SlotIndex> find(SubModuleId id) const;
  std::optional<SubModuleId> at_slot(SlotIndex slot) const;
  std::size_t size() const noexcept { return forward_.size(); }

  const std::unordered_map<SubModuleId, SlotIndex>& forward() const noexcept {
    return forward_;
  }
  const std::map<SlotIndex, SubModuleId>& reverse() const noexcept { return reverse_; }

 private:
  friend class ResidencyState;

  void insert(SubModuleId id, SlotIndex slot);
  void erase(SubModuleId id);

  std::unordered_map<SubModuleId, SlotIndex> forward_;
  std::map<SlotIndex, SubModuleId> reverse_;
};

std::optional<SlotIndex> lookup(const LookupTable& lut, SubModuleId id);

/// Slot assignment as an ordered slot -> id map (what snapshots store).
using Assignment = std::map<SlotIndex, SubModuleId>;

/// Byte-accurate device residency: the slot group, its lookup table and the
/// constant mandatory-resident term. resident_bytes() never exceeds
/// device_budget() after a public operation returns.
class ResidencyState {
 public:
  /// Throws Error(budget_exceeded) when the mandatory blocks alone do not fit.
  ResidencyState(const ModelLayout& layout, SlotGroup group, Bytes device_budget);

  /// Places `sm` into `slot`, evicting (and returning) any previous occupant.
  /// Strong guarantee: on error the state is unchanged.
  std::optional<SubModuleId> assign(SlotIndex slot, const SubModule& sm);
  std::optional<SubModuleId> evict(SlotIndex slot);

  std::optional<SlotIndex> lookup(SubModuleId id) const { return lut_.find(id); }
  bool is_mandatory(SubModuleId id) const { return mandatory_.contains(id); }
  bool is_resident(SubModuleId id) const {
    return is_mandatory(id) || lut_.find(id).has_value();
  }

  std::vector<SlotIndex> rotate_forward(std::size_t k) { return group_.rotate_forward(k); }
  void rotate_reverse(std::size_t k) { group_.rotate_reverse(k); }

  const SlotGroup& slots() const noexcept { return group_; }
  const LookupTable& lut() const noexcept { return lut_; }
  Bytes resident_bytes() const noexcept { return resident_bytes_; }
  Bytes mandatory_bytes() const noexcept { return mandatory_bytes_; }
  Bytes device_budget() const noexcept { return device_budget_; }
  Bytes occupant_bytes(SlotIndex slot) const;

  Assignment assignment() const { return lut_.reverse(); }

  /// Recomputes resident bytes from scratch; equals resident_bytes() unless
  /// the incremental accounting drifted.
  Bytes recompute_resident_bytes() const;
  /// True when LUT, occupants and byte totals agree.
  bool consistent() const;

 private:
  SlotGroup group_;
  LookupTable lut_;
  std::vector<Bytes> occupant_bytes_;
  std::unordered_set<SubModuleId> mandatory_;
  Bytes mandatory_bytes_ = 0;
  Bytes resident_bytes_ = 0;
  Bytes device_budget_ = 0;
};

}  // namespace rotary
