#pragma once

#include <cmath>
#include <span>

#include "warp/data_store.hpp"
#include "warp/rng.hpp"

namespace warp {

// Batched categorical sampling over all (env, agent, category) triples.
// Stateless: the action tensor is a pure function of (logits, seed, step),
// so any execution order or worker count replays identically.

// Inverse-CDF pick for one probability row given logits. Softmax uses
// max-subtraction, the index is the smallest i with u*total < cumsum(i)
// (strict less-than, so boundary values fall through to the next index).
inline int32_t sample_from_logits(std::span<const double> logits, double u) {
  double zmax = logits[0];
  for (double z : logits) zmax = std::max(zmax, z);
  double total = 0.0;
  for (double z : logits) total += std::exp(z - zmax);
  const double target = u * total;
  double cum = 0.0;
  for (size_t i = 0; i + 1 < logits.size(); ++i) {
    cum += std::exp(logits[i] - zmax);
    if (target < cum) return static_cast<int32_t>(i);
  }
  return static_cast<int32_t>(logits.size() - 1);
}

// Samples one action per (env, agent, category) from logits laid out
// [env, agent, category, choice] and writes them in place to the store's
// "sampled_actions" array ([env, agent, category], Int32).
void sample_actions(DataStore& store, std::span<const double> logits, int64_t num_categories,
                    int64_t num_choices, int64_t step, uint64_t seed);

}  // namespace warp
