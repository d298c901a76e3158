#include "warp/sampler.hpp"

namespace warp {

void sample_actions(DataStore& store, std::span<const double> logits, int64_t num_categories,
                    int64_t num_choices, int64_t step, uint64_t seed) {
  const int64_t num_envs = store.num_envs();
  const int64_t num_agents = store.num_agents();
  if (num_categories < 1 || num_choices < 1) {
    raise(Errc::invalid_argument, "sample_actions: categories and choices must be >= 1");
  }
  const int64_t expected = num_envs * num_agents * num_categories * num_choices;
  if (static_cast<int64_t>(logits.size()) != expected) {
    raise(Errc::shape_mismatch, "sample_actions: logits size " + std::to_string(logits.size()) +
                                    ", expected " + std::to_string(expected));
  }
  const ArrayHandle h = store.handle(kSampledActions);
  const ArrayInfo& info = store.info(h);
  if (info.env_stride != num_agents * num_categories) {
    raise(Errc::shape_mismatch, "sample_actions: \"sampled_actions\" shape does not match "
                                "[envs, agents, categories]");
  }
  for (double z : logits) {
    if (!std::isfinite(z)) raise(Errc::non_finite, "sample_actions: non-finite logit");
  }

  std::span<int32_t> actions = store.i32(h);
  const uint64_t stream = substream(seed, kStreamActions);
  const double* row = logits.data();
  int64_t out = 0;
  for (int64_t e = 0; e < num_envs; ++e) {
    for (int64_t a = 0; a < num_agents; ++a) {
      for (int64_t c = 0; c < num_categories; ++c) {
        const double u = uniform({stream, step, e, a, c, 0});
        actions[out++] = sample_from_logits({row, static_cast<size_t>(num_choices)}, u);
        row += num_choices;
      }
    }
  }
}

}  // namespace warp
