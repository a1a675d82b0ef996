#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "aes/error.hpp"

namespace aes {

/// One environment transition together with the behavior policy's probability of the action taken.
struct Step {
  int state = 0;
  int action = 0;
  double behavior_prob = 1.0;
  double reward = 0.0;
  int next_state = 0;
};

/// A finite-horizon episode. `policy_tag` is the policy-update step that generated it.
struct Trajectory {
  std::vector<Step> steps;
  std::int64_t policy_tag = 0;

  void validate() const {
    if (steps.empty()) throw DataError("trajectory has no steps");
    for (const Step& s : steps) {
      if (!(s.behavior_prob > 0.0 && s.behavior_prob <= 1.0)) {
        throw DataError("behavior probability outside (0, 1]");
      }
      if (!std::isfinite(s.reward)) throw DataError("non-finite reward");
    }
  }

  [[nodiscard]] std::size_t length() const { return steps.size(); }
};

}  // namespace aes
