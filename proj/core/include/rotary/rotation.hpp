#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rotary/residency.hpp"
#include "rotary/workloads.hpp"

namespace rotary {

/// Exponentially weighted, L2-normalised summary of recent routing vectors.
/// The zero vector is only observable before the first update.
class ContextSignature {
 public:
  ContextSignature() = default;
  /// `decay` is the weight given to the newest routing vector, in (0, 1].
  ContextSignature(std::size_t dimensions, double decay);

  /// sig' = normalize(decay * routing + (1 - decay) * sig). Throws
  /// Error(invalid_argument) for negative weights, ids outside the
  /// signature's dimensions, or an all-zero routing vector.
  void update(std::span<const RoutingEntry> routing);

  double cosine(const ContextSignature& other) const;
  double norm() const;
  bool is_zero() const;

  std::span<const double> weights() const noexcept { return weights_; }
  double decay() const noexcept { return decay_; }
  std::size_t dimensions() const noexcept { return weights_.size(); }

  /// Builds a signature from an explicit weight vector (normalised here).
  static ContextSignature from_weights(std::vector<double> weights, double decay = 1.0);

  friend bool operator==(const ContextSignature&, const ContextSignature&) = default;

 private:
  std::vector<double> weights_;
  double decay_ = 1.0;
};

ContextSignature update_signature(ContextSignature sig, std::span<const RoutingEntry> routing);

struct Snapshot {
  std::uint64_t id = 0;
  ContextSignature signature;
  Assignment assignment;
  std::uint64_t step_taken = 0;
};

/// Bounded FIFO history of snapshots; the oldest entry drops out first.
class SnapshotRing {
 public:
  explicit SnapshotRing(std::size_t capacity);

  const Snapshot& take(Assignment assignment, ContextSignature signature, std::uint64_t step);

  /// Snapshot with the highest cosine similarity >= tau, ties going to the
  /// most recent entry.
  std::optional<Snapshot> match(const ContextSignature& sig, double tau) const;
  const Snapshot* find(std::uint64_t id) const;

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::deque<Snapshot>& entries() const noexcept { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<Snapshot> entries_;
  std::uint64_t next_id_ = 0;
};

inline SnapshotRing take_snapshot(SnapshotRing ring, Assignment assignment, ContextSignature sig,
                                  std::uint64_t step) {
  ring.take(std::move(assignment), std::move(sig), step);
  return ring;
}

inline std::optional<Snapshot> match_snapshot(const SnapshotRing& ring,
                                              const ContextSignature& sig, double tau) {
  return ring.match(sig, tau);
}

struct RotationDecision {
  enum class Kind { hold, forward, restore };

  Kind kind = Kind::hold;
  std::uint32_t k = 0;             // forward magnitude
  std::uint64_t snapshot_id = 0;   // restore target

  static RotationDecision hold() { return {}; }
  static RotationDecision forward(std::uint32_t k) { return {Kind::forward, k, 0}; }
  static RotationDecision restore(std::uint64_t id) { return {Kind::restore, 0, id}; }

  std::string to_string() const;
  friend bool operator==(const RotationDecision&, const RotationDecision&) = default;
};

struct RotaryParams {
  double lambda = 1.0;
  double tau = 0.9;
  std::uint32_t k_step = 1;
  std::size_t history = 8;
  std::uint32_t snapshot_period = 16;
  double tau_boundary = 0.5;

  /// Throws Error(invalid_argument) naming the offending parameter.
  void validate(std::size_t slot_count) const;
};

/// Restore when a matching snapshot has members that are not resident;
/// otherwise forward(k_step) when the token needs a non-resident sub-module;
/// otherwise hold.
RotationDecision decide(const ContextSignature& sig, const SnapshotRing& ring,
                        const ResidencyState& state, std::span<const SubModuleId> required,
                        const RotaryParams& params);

/// Owns the signature and snapshot history across a trace. Snapshots are
/// taken every `snapshot_period` tokens and whenever the cosine between
/// consecutive signatures falls below `tau_boundary`; each one records the
/// context that just ended (previous signature, current slot assignment).
class RotationController {
 public:
  RotationController(RotaryParams params, std::size_t dimensions, std::size_t slot_count);

  RotationDecision observe(const AccessEvent& event, const ResidencyState& state);

  const ContextSignature& signature() const noexcept { return signature_; }
  const SnapshotRing& ring() const noexcept { return ring_; }
  const RotaryParams& params() const noexcept { return params_; }

 private:
  RotaryParams params_;
  ContextSignature signature_;
  SnapshotRing ring_;
  std::uint64_t ordinal_ = 0;
};

}  // namespace rotary
