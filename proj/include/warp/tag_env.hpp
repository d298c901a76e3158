#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "warp/data_store.hpp"
#include "warp/step_engine.hpp"

namespace warp {

// Tag: num_taggers chase num_runners on a bounded 2-D field. A runner within
// tag range of a tagger is tagged, deactivates, and stops earning anything.
// The episode ends after episode_length steps or when no runner is left.
//
// Conventions (the rules below are normative for both implementations):
//   - agents [0, num_taggers) are taggers, the rest are runners
//   - "up" is +y; angle 0 points along +x; dt = 1
//   - discrete actions: 0 stay, 1 up, 2 down, 3 left, 4 right
//   - continuous action categories: 0 = accelerate {-,0,+}, 1 = turn {-,0,+}
//   - discrete tagging = same cell; continuous = Euclidean distance <= tag_radius
//   - tag credit goes to the nearest tagger, ties to the lowest tagger index

enum class TagVariant : uint8_t { Discrete, Continuous };
enum class ObsMode : uint8_t { Full, Partial };

struct TagConfig {
  TagVariant variant = TagVariant::Discrete;
  int64_t grid_size = 20;       // discrete: cells per side
  double world_length = 20.0;   // continuous: length units per side
  int64_t num_taggers = 2;
  int64_t num_runners = 10;
  int64_t episode_length = 500;
  double tag_radius = 1.0;      // continuous only; discrete is same-cell
  ObsMode obs_mode = ObsMode::Full;
  int64_t k_nearest = 5;        // partial observations only
  double tag_reward = 1.0;
  double tagged_penalty = -1.0;
  double max_speed_tagger = 1.0;
  double max_speed_runner = 1.0;
  double accel_delta = 0.1;
  double turn_delta = 0.5235987755982988;  // pi/6
  uint64_t seed = 0;

  int64_t num_agents() const { return num_taggers + num_runners; }
  int64_t action_categories() const { return variant == TagVariant::Continuous ? 2 : 1; }
  int64_t action_choices() const { return variant == TagVariant::Continuous ? 3 : 5; }

  // Observation row: one block per visible agent (nearest-first under partial,
  // ascending agent id under full), then self features, then normalized time.
  int64_t neighbor_block_dim() const { return variant == TagVariant::Continuous ? 7 : 4; }
  int64_t self_block_dim() const { return variant == TagVariant::Continuous ? 5 : 2; }
  int64_t visible_agents() const {
    return obs_mode == ObsMode::Partial ? k_nearest : num_agents() - 1;
  }
  int64_t obs_dim() const {
    return visible_agents() * neighbor_block_dim() + self_block_dim() + 1;
  }
  double side_length() const {
    return variant == TagVariant::Discrete ? static_cast<double>(grid_size) : world_length;
  }

  void validate() const;  // throws Errc::invalid_config
};

// Movement rules. Positions are stored as floats; discrete cells hold exact
// small integers.

inline void move_discrete(int32_t action, float& x, float& y, int64_t grid_size) {
  switch (action) {
    case 1: y += 1.0f; break;
    case 2: y -= 1.0f; break;
    case 3: x -= 1.0f; break;
    case 4: x += 1.0f; break;
    default: break;  // 0 = stay
  }
  const float hi = static_cast<float>(grid_size - 1);
  x = std::min(std::max(x, 0.0f), hi);
  y = std::min(std::max(y, 0.0f), hi);
}

inline constexpr float kTwoPi = 6.28318530717958647692f;

inline void move_continuous(int32_t accel_action, int32_t turn_action, float& speed,
                            float& direction, float& x, float& y, float accel_delta,
                            float turn_delta, float max_speed, float world_len) {
  if (turn_action == 0) direction -= turn_delta;
  if (turn_action == 2) direction += turn_delta;
  while (direction >= kTwoPi) direction -= kTwoPi;
  while (direction < 0.0f) direction += kTwoPi;
  if (accel_action == 0) speed -= accel_delta;
  if (accel_action == 2) speed += accel_delta;
  speed = std::min(std::max(speed, 0.0f), max_speed);
  x += speed * std::cos(direction);
  y += speed * std::sin(direction);
  x = std::min(std::max(x, 0.0f), world_len);
  y = std::min(std::max(y, 0.0f), world_len);
}

struct TagContext;  // engine-side bound state, defined in tag_env.cpp

struct TagPlan {
  PhasePlan plan;
  std::shared_ptr<TagContext> context;
};

// Registers every TagState array (positions and flags snapshot_on_reset) plus
// the canonical placeholders, initialized to the episode-0 state drawn from
// config.seed. Call on an unlocked store sized [num_envs, cfg.num_agents()].
void register_tag_arrays(DataStore& store, const TagConfig& cfg);

// Builds the three-phase step plan (move / resolve tags / observe+reward)
// over a locked store.
TagPlan build_tag_plan(DataStore& store, const TagConfig& cfg);

// Names of arrays the reset manager should zero-fill (the rest are either
// snapshot-restored or constant).
std::vector<std::string> tag_zero_on_reset();

// Re-randomizes one environment for a new episode (fresh placement keyed by
// the episode counter) and recomputes its observations in place.
std::function<void(DataStore&, int64_t env_id, int64_t episode)> make_tag_reinit(
    const TagPlan& plan);

// Sequential single-threaded implementation of the same step semantics,
// written against plain loops and brute-force scans. Serves as the
// consistency oracle for the engine path: results must match bit for bit.
class TagReference {
 public:
  TagReference(DataStore& store, const TagConfig& cfg);

  // One full step (move, resolve tags, observe+reward) over every env.
  void step(int64_t step_index);

  // Counterpart of make_tag_reinit for the reference-side store.
  void reinit_env(int64_t env_id, int64_t episode);

 private:
  void observe_env(int64_t env_id);

  DataStore& store_;
  TagConfig cfg_;
  std::vector<float> sin_dir_, cos_dir_;
  std::vector<float> inv_max_speed_;
  std::vector<std::pair<float, int32_t>> dist_scratch_;
  std::vector<int32_t> neighbor_scratch_;
};

namespace detail {

// Test-only fault injection for mutation-testing the consistency checker.
// Applied by the engine kernels only; the sequential reference ignores it.
struct FaultHooks {
  float tag_radius_bias = 0.0f;
};
FaultHooks& fault_hooks();

}  // namespace detail

}  // namespace warp
