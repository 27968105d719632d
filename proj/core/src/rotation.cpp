#include "rotary/rotation.hpp"

#include <cmath>

#include "rotary/error.hpp"

namespace rotary {

namespace {

void check_decay(double decay) {
  if (!(decay > 0.0 && decay <= 1.0))
    throw Error(ErrorCode::invalid_argument, "signature decay must lie in (0, 1]");
}

void normalize(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq == 0.0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
}

}  // namespace

ContextSignature::ContextSignature(std::size_t dimensions, double decay)
    : weights_(dimensions, 0.0), decay_(decay) {
  check_decay(decay);
}

ContextSignature ContextSignature::from_weights(std::vector<double> weights, double decay) {
  check_decay(decay);
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w))
      throw Error(ErrorCode::invalid_argument, "signature weights must be finite and >= 0");
  ContextSignature sig;
  sig.decay_ = decay;
  sig.weights_ = std::move(weights);
  normalize(sig.weights_);
  return sig;
}

void ContextSignature::update(std::span<const RoutingEntry> routing) {
  std::vector<double> incoming(weights_.size(), 0.0);
  bool nonzero = false;
  for (const auto& r : routing) {
    if (!(r.weight >= 0.0) || !std::isfinite(r.weight))
      throw Error(ErrorCode::invalid_argument, "routing weights must be finite and >= 0");
    if (to_index(r.id) >= weights_.size())
      throw Error(ErrorCode::invalid_argument,
                  "routing id " + std::to_string(to_index(r.id)) + " outside signature of " +
                      std::to_string(weights_.size()) + " entries");
    incoming[to_index(r.id)] += r.weight;
    nonzero = nonzero || r.weight > 0.0;
  }
  if (!nonzero) throw Error(ErrorCode::invalid_argument, "routing vector is all zero");

  for (std::size_t i = 0; i < weights_.size(); ++i)
    weights_[i] = decay_ * incoming[i] + (1.0 - decay_) * weights_[i];
  normalize(weights_);
}

double ContextSignature::norm() const {
  double sq = 0.0;
  for (double x : weights_) sq += x * x;
  return std::sqrt(sq);
}

bool ContextSignature::is_zero() const {
  for (double x : weights_)
    if (x != 0.0) return false;
  return true;
}

double ContextSignature::cosine(const ContextSignature& other) const {
  if (other.weights_.size() != weights_.size())
    throw Error(ErrorCode::invalid_argument, "signature dimension mismatch");
  double dot = 0.0, a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    dot += weights_[i] * other.weights_[i];
    a += weights_[i] * weights_[i];
    b += other.weights_[i] * other.weights_[i];
  }
  if (a == 0.0 || b == 0.0) return 0.0;
  return dot / (std::sqrt(a) * std::sqrt(b));
}

ContextSignature update_signature(ContextSignature sig, std::span<const RoutingEntry> routing) {
  sig.update(routing);
  return sig;
}

SnapshotRing::SnapshotRing(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorCode::invalid_argument, "snapshot history must be >= 1");
}

const Snapshot& SnapshotRing::take(Assignment assignment, ContextSignature signature,
                                   std::uint64_t step) {
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(Snapshot{next_id_++, std::move(signature), std::move(assignment), step});
  return entries_.back();
}

std::optional<Snapshot> SnapshotRing::match(const ContextSignature& sig, double tau) const {
  const Snapshot* best = nullptr;
  double best_sim = 0.0;
  for (const auto& snap : entries_) {
    const double sim = snap.signature.cosine(sig);
    if (sim < tau) continue;
    if (!best || sim >= best_sim) {
      best = &snap;
      best_sim = sim;
    }
  }
  if (!best) return std::nullopt;
  return *best;
}

const Snapshot* SnapshotRing::find(std::uint64_t id) const {
  for (const auto& snap : entries_)
    if (snap.id == id) return &snap;
  return nullptr;
}

std::string RotationDecision::to_string() const {
  switch (kind) {
    case Kind::hold: return "hold";
    case Kind::forward: return "forward(" + std::to_string(k) + ")";
    case Kind::restore: return "restore(" + std::to_string(snapshot_id) + ")";
  }
  return "hold";
}

void RotaryParams::validate(std::size_t slot_count) const {
  if (!(lambda > 0.0 && lambda <= 1.0))
    throw Error(ErrorCode::invalid_argument, "rotary.lambda must lie in (0, 1]");
  if (!(tau >= -1.0 && tau <= 1.0))
    throw Error(ErrorCode::invalid_argument, "rotary.tau must lie in [-1, 1]");
  if (!(tau_boundary >= -1.0 && tau_boundary <= 1.0))
    throw Error(ErrorCode::invalid_argument, "rotary.tau_boundary must lie in [-1, 1]");
  // k_step is unused with a single slot.
  if (k_step < 1 || (slot_count > 1 && k_step >= slot_count))
    throw Error(ErrorCode::invalid_argument,
                "rotary.k_step must lie in [1, " + std::to_string(slot_count) + ")");
  if (history < 1) throw Error(ErrorCode::invalid_argument, "rotary.history must be >= 1");
  if (snapshot_period < 1)
    throw Error(ErrorCode::invalid_argument, "rotary.snapshot_period must be >= 1");
}

RotationDecision decide(const ContextSignature& sig, const SnapshotRing& ring,
                        const ResidencyState& state, std::span<const SubModuleId> required,
                        const RotaryParams& params) {
  params.validate(state.slots().capacity());

  if (auto snap = ring.match(sig, params.tau)) {
    for (const auto& [slot, id] : snap->assignment)
      if (!state.is_resident(id)) return RotationDecision::restore(snap->id);
  }
  for (auto id : required)
    if (!state.is_resident(id)) {
      // One slot has no forward step in [1, N); the miss lands on the head.
      if (state.slots().capacity() == 1) return RotationDecision::hold();
      return RotationDecision::forward(params.k_step);
    }
  return RotationDecision::hold();
}

RotationController::RotationController(RotaryParams params, std::size_t dimensions,
                                       std::size_t slot_count)
    : params_(params), signature_(dimensions, params.lambda), ring_(params.history) {
  params_.validate(slot_count);
}

RotationDecision RotationController::observe(const AccessEvent& event,
                                             const ResidencyState& state) {
  const ContextSignature previous = signature_;
  signature_.update(event.routing);

  const bool periodic = ordinal_ > 0 && ordinal_ % params_.snapshot_period == 0;
  const bool boundary =
      !previous.is_zero() && previous.cosine(signature_) < params_.tau_boundary;
  if ((periodic || boundary) && state.lut().size() > 0)
    ring_.take(state.assignment(), previous, event.step);
  ++ordinal_;

  return decide(signature_, ring_, state, event.required, params_);
}

}  // namespace rotary
