#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aes/error.hpp"
#include "aes/rng.hpp"
#include "aes/simplex_sampler.hpp"
#include "aes/sum_tree.hpp"
#include "aes/trajectory.hpp"

namespace aes {

/// Draws a slot from q(j) = (1 - p(j)) / (|B| - 1) by rejection: propose j
/// uniformly, accept with probability 1 - p(j). Expected proposals are
/// |B| / (|B| - 1) <= 2 for any p.
template <class ProbFn>
std::size_t complement_victim(std::size_t capacity, ProbFn&& prob, Rng& rng) {
  if (capacity == 0) throw DataError("empty buffer has no victim");
  if (capacity == 1) return 0;
  for (;;) {
    const std::size_t j = rng.index(capacity);
    if (rng.uniform() >= prob(j)) return j;
  }
}

inline std::size_t complement_victim(const SimplexDistribution& p, Rng& rng) {
  return complement_victim(p.size(), [&p](std::size_t j) { return p[j]; }, rng);
}

/// Replay buffer of trajectories with a sum-tree index over the slot scores
/// s(i) = sqrt(w(i) + nu) of a SamplerState.
///
/// The store never owns the sampler. Mutations of the sampler that change
/// w must go through the store (record_feedback, maybe_reset, insert) or be
/// followed by rebuild_index, otherwise the index goes stale.
class WeightedStore {
 public:
  explicit WeightedStore(const SamplerState& sampler)
      : slots_(sampler.capacity()), index_(sampler.capacity()) {
    rebuild_index(sampler);
  }

  [[nodiscard]] std::size_t capacity() const { return slots_.size(); }
  [[nodiscard]] std::size_t occupancy() const { return occupancy_; }
  [[nodiscard]] bool warmed_up() const { return occupancy_ == slots_.size(); }
  [[nodiscard]] const SumTree& index() const { return index_; }
  [[nodiscard]] const std::optional<Trajectory>& slot(std::size_t i) const { return slots_.at(i); }

  [[nodiscard]] const Trajectory& at(std::size_t i) const {
    const auto& s = slots_.at(i);
    if (!s) throw NotReady("slot " + std::to_string(i) + " is empty");
    return *s;
  }

  /// p(i) of the mixed distribution, read from the index in O(1).
  [[nodiscard]] double probability(const SamplerState& sampler, std::size_t i) const {
    const double kappa = sampler.config().kappa;
    return (1.0 - kappa) * index_.get(i) / index_.total() + kappa / static_cast<double>(capacity());
  }

  /// Full distribution implied by the index. O(|B|).
  [[nodiscard]] SimplexDistribution distribution(const SamplerState& sampler) const {
    std::vector<double> p(capacity());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = probability(sampler, i);
    return SimplexDistribution(std::move(p));
  }

  /// I.i.d. draws with replacement from the mixture: with probability kappa a
  /// uniform slot, otherwise a slot proportional to its score. One uniform
  /// variate per draw, so kappa = 1 consumes the generator exactly like plain
  /// uniform sampling.
  [[nodiscard]] std::vector<std::size_t> sample_indices(const SamplerState& sampler,
                                                        std::size_t batch, Rng& rng) const {
    std::vector<std::size_t> out;
    if (batch == 0) return out;
    if (!warmed_up()) throw NotReady("buffer not warmed up");
    out.reserve(batch);
    const double kappa = sampler.config().kappa;
    const std::size_t n = capacity();
    for (std::size_t b = 0; b < batch; ++b) {
      const double u = rng.uniform();
      std::size_t slot;
      if (u < kappa) {
        slot = std::min(n - 1, static_cast<std::size_t>(u / kappa * static_cast<double>(n)));
      } else {
        const double v = (u - kappa) / (1.0 - kappa);
        slot = std::min(n - 1, index_.find(v * index_.total()));
      }
      out.push_back(slot);
    }
    return out;
  }

  /// Stores a trajectory. While filling, slots are assigned in order. Once
  /// full, the victim is drawn from the complement distribution of the current
  /// p and its accumulator is cleared. Returns the slot written.
  std::size_t insert(Trajectory traj, SamplerState& sampler, Rng& rng) {
    traj.validate();
    std::size_t slot;
    if (occupancy_ < capacity()) {
      slot = occupancy_++;
    } else {
      slot = complement_victim(capacity(), [&](std::size_t j) { return probability(sampler, j); }, rng);
    }
    slots_[slot] = std::move(traj);
    sampler.clear_slot(slot);
    index_.set(slot, sampler.score(slot));
    return slot;
  }

  /// Writes into a caller-chosen slot (FIFO or priority-driven replacement by other strategies).
  void put(std::size_t slot, Trajectory traj, SamplerState& sampler) {
    traj.validate();
    if (slot >= capacity()) throw DataError("slot out of range");
    if (!slots_[slot]) ++occupancy_;
    slots_[slot] = std::move(traj);
    sampler.clear_slot(slot);
    index_.set(slot, sampler.score(slot));
  }

  /// Forwards feedback to the sampler and refreshes the touched leaves.
  void record_feedback(SamplerState& sampler, std::span<const Feedback> draws) {
    sampler.record_feedback(draws);
    for (const Feedback& f : draws) index_.set(f.slot, sampler.score(f.slot));
  }

  /// Forwards the periodic reset and rebuilds the index if one happened.
  bool maybe_reset(SamplerState& sampler) {
    if (!sampler.maybe_reset()) return false;
    rebuild_index(sampler);
    return true;
  }

  void rebuild_index(const SamplerState& sampler) {
    if (sampler.capacity() != capacity()) throw DataError("sampler and store capacities differ");
    std::vector<double> scores(capacity());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = sampler.score(i);
    index_.assign(scores);
  }

  /// Largest relative difference between any node of the live index and a
  /// tree rebuilt from scratch from the sampler.
  [[nodiscard]] double index_deviation(const SamplerState& sampler) const {
    SumTree fresh(capacity());
    std::vector<double> scores(capacity());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = sampler.score(i);
    fresh.assign(scores);
    double worst = 0.0;
    const auto a = index_.nodes();
    const auto b = fresh.nodes();
    for (std::size_t k = 1; k < a.size(); ++k) {
      const double scale = std::max({std::abs(a[k]), std::abs(b[k]), 1e-300});
      worst = std::max(worst, std::abs(a[k] - b[k]) / scale);
    }
    return worst;
  }

 private:
  std::vector<std::optional<Trajectory>> slots_;
  SumTree index_;
  std::size_t occupancy_ = 0;
};

// Buffer snapshots
//
// JSON document, fields in this order:
//   format   "aes-buffer"
//   version  1
//   capacity |B|
//   nu, kappa, reset_period
//   step     sampler update counter
//   w        accumulator per slot
//   slots    per slot: null, or {"policy_tag": int,
//            "steps": [[state, action, behavior_prob, reward, next_state], ...]}
// Reset mode and feedback bound are not stored; the loader takes them from
// the config supplied by the caller.

inline constexpr int kSnapshotVersion = 1;

inline void save_snapshot(std::ostream& os, const WeightedStore& store, const SamplerState& sampler) {
  nlohmann::ordered_json doc;
  doc["format"] = "aes-buffer";
  doc["version"] = kSnapshotVersion;
  doc["capacity"] = store.capacity();
  doc["nu"] = sampler.config().nu;
  doc["kappa"] = sampler.config().kappa;
  doc["reset_period"] = sampler.config().reset_period;
  doc["step"] = sampler.step();
  doc["w"] = std::vector<double>(sampler.weights().begin(), sampler.weights().end());
  auto& slots = doc["slots"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < store.capacity(); ++i) {
    const auto& s = store.slot(i);
    if (!s) {
      slots.push_back(nullptr);
      continue;
    }
    nlohmann::ordered_json t;
    t["policy_tag"] = s->policy_tag;
    auto& steps = t["steps"] = nlohmann::ordered_json::array();
    for (const Step& st : s->steps) {
      steps.push_back({st.state, st.action, st.behavior_prob, st.reward, st.next_state});
    }
    slots.push_back(std::move(t));
  }
  os << doc.dump() << '\n';
}

struct Snapshot {
  SamplerState sampler;
  WeightedStore store;
};

/// Restores a snapshot. `base` supplies the fields a snapshot does not carry;
/// capacity, nu, kappa and reset_period are taken from the document.
inline Snapshot load_snapshot(std::istream& is, SamplerConfig base = {}) {
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("snapshot is not valid JSON: ") + e.what());
  }
  if (doc.value("format", "") != "aes-buffer") throw DataError("not an aes-buffer snapshot");
  if (doc.value("version", 0) != kSnapshotVersion) throw DataError("unsupported snapshot version");
  try {
    base.buffer_capacity = doc.at("capacity").get<std::size_t>();
    base.nu = doc.at("nu").get<double>();
    base.kappa = doc.at("kappa").get<double>();
    base.reset_period = doc.at("reset_period").get<std::uint64_t>();
    SamplerState sampler(base);
    auto saved_w = doc.at("w").get<std::vector<double>>();
    const auto saved_step = doc.at("step").get<std::uint64_t>();
    WeightedStore store(sampler);
    const auto& slots = doc.at("slots");
    if (slots.size() != base.buffer_capacity) throw DataError("snapshot slot count mismatch");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i].is_null()) continue;
      Trajectory t;
      t.policy_tag = slots[i].at("policy_tag").get<std::int64_t>();
      for (const auto& st : slots[i].at("steps")) {
        t.steps.push_back({st.at(0).get<int>(), st.at(1).get<int>(), st.at(2).get<double>(),
                           st.at(3).get<double>(), st.at(4).get<int>()});
      }
      store.put(i, std::move(t), sampler);
    }
    // put() clears accumulators, so the saved ones are restored last.
    sampler.restore(std::move(saved_w), saved_step);
    store.rebuild_index(sampler);
    return Snapshot{std::move(sampler), std::move(store)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed snapshot: ") + e.what());
  }
}

}  // namespace aes
