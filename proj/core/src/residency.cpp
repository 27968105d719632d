#include "rotary/residency.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "rotary/error.hpp"

namespace rotary {

namespace {

std::string id_str(SubModuleId id) { return std::to_string(to_index(id)); }

}  // namespace

ModelLayout::ModelLayout(std::vector<SubModule> submodules,
                         std::vector<SubModuleId> mandatory_resident)
    : submodules_(std::move(submodules)) {
  index_.reserve(submodules_.size());
  for (std::size_t i = 0; i < submodules_.size(); ++i) {
    const auto& sm = submodules_[i];
    if (sm.size_bytes == 0)
      throw Error(ErrorCode::invalid_argument, "sub-module " + id_str(sm.id) + " has zero size");
    if (sm.kind == SubModuleKind::shared && sm.expert_index)
      throw Error(ErrorCode::invalid_argument,
                  "shared sub-module " + id_str(sm.id) + " carries an expert index");
    if (sm.kind == SubModuleKind::expert && !sm.expert_index)
      throw Error(ErrorCode::invalid_argument,
                  "expert sub-module " + id_str(sm.id) + " lacks an expert index");
    if (!index_.emplace(sm.id, i).second)
      throw Error(ErrorCode::invalid_argument, "duplicate sub-module id " + id_str(sm.id));
    total_bytes_ += sm.size_bytes;
  }

  std::sort(mandatory_resident.begin(), mandatory_resident.end());
  for (auto id : mandatory_resident) {
    auto it = index_.find(id);
    if (it == index_.end())
      throw Error(ErrorCode::invalid_argument,
                  "mandatory id " + id_str(id) + " is not in the layout");
    const auto& sm = submodules_[it->second];
    if (sm.kind != SubModuleKind::shared)
      throw Error(ErrorCode::invalid_argument,
                  "mandatory id " + id_str(id) + " is not a shared sub-module");
    if (!mandatory_set_.insert(id).second)
      throw Error(ErrorCode::invalid_argument, "mandatory id " + id_str(id) + " listed twice");
    mandatory_bytes_ += sm.size_bytes;
  }
  mandatory_ = std::move(mandatory_resident);
}

const SubModule* ModelLayout::find(SubModuleId id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &submodules_[it->second];
}

bool ModelLayout::is_mandatory(SubModuleId id) const { return mandatory_set_.contains(id); }

std::vector<std::uint32_t> ModelLayout::expert_layers() const {
  std::set<std::uint32_t> layers;
  for (const auto& sm : submodules_)
    if (sm.kind == SubModuleKind::expert) layers.insert(sm.layer_index);
  return {layers.begin(), layers.end()};
}

Bytes ModelLayout::expert_bytes_in_first_layers(std::size_t count) const {
  auto layers = expert_layers();
  if (count > layers.size())
    throw Error(ErrorCode::invalid_argument,
                "requested " + std::to_string(count) + " expert layers, layout has " +
                    std::to_string(layers.size()));
  if (count == 0) return 0;
  const std::uint32_t last = layers[count - 1];
  Bytes total = 0;
  for (const auto& sm : submodules_)
    if (sm.kind == SubModuleKind::expert && sm.layer_index <= last) total += sm.size_bytes;
  return total;
}

SlotGroup::SlotGroup(std::size_t capacity, Bytes per_slot_limit)
    : per_slot_limit_(per_slot_limit) {
  if (capacity == 0) throw Error(ErrorCode::invalid_argument, "slot group capacity must be >= 1");
  if (per_slot_limit == 0) throw Error(ErrorCode::invalid_argument, "per-slot limit must be > 0");
  occupants_.resize(capacity);
}

std::optional<SubModuleId> SlotGroup::occupant(SlotIndex slot) const {
  if (slot >= occupants_.size())
    throw Error(ErrorCode::invalid_argument, "slot " + std::to_string(slot) + " out of range");
  return occupants_[slot];
}

std::size_t SlotGroup::occupied() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(occupants_.begin(), occupants_.end(), [](const auto& o) { return o.has_value(); }));
}

std::vector<SlotIndex> SlotGroup::rotate_forward(std::size_t k) {
  const std::size_t n = occupants_.size();
  std::vector<SlotIndex> traversed;
  traversed.reserve(k);
  for (std::size_t i = 0; i < k; ++i) traversed.push_back((head_ + i) % n);
  head_ = (head_ + k % n) % n;
  return traversed;
}

void SlotGroup::rotate_reverse(std::size_t k) {
  const std::size_t n = occupants_.size();
  head_ = (head_ + n - k % n) % n;
}

std::optional<SlotIndex> LookupTable::find(SubModuleId id) const {
  auto it = forward_.find(id);
  if (it == forward_.end()) return std::nullopt;
  return it->second;
}

std::optional<SubModuleId> LookupTable::at_slot(SlotIndex slot) const {
  auto it = reverse_.find(slot);
  if (it == reverse_.end()) return std::nullopt;
  return it->second;
}

void LookupTable::insert(SubModuleId id, SlotIndex slot) {
  forward_.emplace(id, slot);
  reverse_.emplace(slot, id);
}

void LookupTable::erase(SubModuleId id) {
  auto it = forward_.find(id);
  if (it == forward_.end()) return;
  reverse_.erase(it->second);
  forward_.erase(it);
}

std::optional<SlotIndex> lookup(const LookupTable& lut, SubModuleId id) { return lut.find(id); }

ResidencyState::ResidencyState(const ModelLayout& layout, SlotGroup group, Bytes device_budget)
    : group_(std::move(group)),
      occupant_bytes_(group_.capacity(), 0),
      mandatory_(layout.mandatory_resident().begin(), layout.mandatory_resident().end()),
      mandatory_bytes_(layout.mandatory_bytes()),
      resident_bytes_(layout.mandatory_bytes()),
      device_budget_(device_budget) {
  if (mandatory_bytes_ > device_budget_)
    throw Error(ErrorCode::budget_exceeded,
                "mandatory-resident bytes " + std::to_string(mandatory_bytes_) +
                    " exceed device budget " + std::to_string(device_budget_));
}

std::optional<SubModuleId> ResidencyState::assign(SlotIndex slot, const SubModule& sm) {
  if (slot >= group_.capacity())
    throw Error(ErrorCode::invalid_argument, "slot " + std::to_string(slot) + " out of range");
  if (is_mandatory(sm.id))
    throw Error(ErrorCode::invalid_argument,
                "mandatory sub-module " + id_str(sm.id) + " cannot occupy a slot");
  if (sm.size_bytes > group_.per_slot_limit())
    throw Error(ErrorCode::invalid_argument,
                "sub-module " + id_str(sm.id) + " (" + std::to_string(sm.size_bytes) +
                    " B) exceeds the per-slot limit");
  if (lut_.find(sm.id))
    throw Error(ErrorCode::duplicate_resident, "sub-module " + id_str(sm.id) + " already resident");

  const Bytes after = resident_bytes_ - occupant_bytes_[slot] + sm.size_bytes;
  if (after > device_budget_)
    throw Error(ErrorCode::budget_exceeded,
                "assigning " + id_str(sm.id) + " would raise resident bytes to " +
                    std::to_string(after) + " > " + std::to_string(device_budget_));

  auto previous = evict(slot);
  group_.occupants_[slot] = sm.id;
  occupant_bytes_[slot] = sm.size_bytes;
  lut_.insert(sm.id, slot);
  resident_bytes_ += sm.size_bytes;
  return previous;
}

std::optional<SubModuleId> ResidencyState::evict(SlotIndex slot) {
  if (slot >= group_.capacity())
    throw Error(ErrorCode::invalid_argument, "slot " + std::to_string(slot) + " out of range");
  auto previous = group_.occupants_[slot];
  if (!previous) return std::nullopt;
  lut_.erase(*previous);
  resident_bytes_ -= occupant_bytes_[slot];
  occupant_bytes_[slot] = 0;
  group_.occupants_[slot].reset();
  return previous;
}

Bytes ResidencyState::occupant_bytes(SlotIndex slot) const {
  if (slot >= group_.capacity())
    throw Error(ErrorCode::invalid_argument, "slot " + std::to_string(slot) + " out of range");
  return occupant_bytes_[slot];
}

Bytes ResidencyState::recompute_resident_bytes() const {
  Bytes total = mandatory_bytes_;
  for (SlotIndex s = 0; s < group_.capacity(); ++s)
    if (group_.occupants_[s]) total += occupant_bytes_[s];
  return total;
}

bool ResidencyState::consistent() const {
  std::size_t occupied = 0;
  for (SlotIndex s = 0; s < group_.capacity(); ++s) {
    const auto& occ = group_.occupants_[s];
    if (!occ) {
      if (occupant_bytes_[s] != 0 || lut_.at_slot(s)) return false;
      continue;
    }
    ++occupied;
    auto slot = lut_.find(*occ);
    if (!slot || *slot != s) return false;
    if (lut_.at_slot(s) != occ) return false;
  }
  return occupied == lut_.size() && lut_.reverse().size() == lut_.size() &&
         recompute_resident_bytes() == resident_bytes_ && resident_bytes_ <= device_budget_;
}

}  // namespace rotary
