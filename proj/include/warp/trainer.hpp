#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "warp/policy_model.hpp"
#include "warp/reset_manager.hpp"
#include "warp/step_engine.hpp"

namespace warp {

enum class Algorithm : uint8_t { A2C, PPO };

struct TrainerConfig {
  Algorithm algorithm = Algorithm::A2C;
  double gamma = 0.99;
  int64_t rollout_horizon = 100;
  double learning_rate = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double ppo_clip = 0.2;
  int64_t ppo_epochs = 4;
  double max_grad_norm = 0.5;
  int64_t iterations = 0;
  uint64_t seed = 0;
  std::vector<int64_t> hidden_sizes = {64, 64};
  int64_t checkpoint_every = 0;  // 0 = final checkpoint only

  void validate() const;
};

// One on-policy rollout over all envs and agents, captured step by step from
// the store. `active` masks transitions by the agent's flag at action time.
struct RolloutBatch {
  int64_t horizon = 0, num_envs = 0, num_agents = 0, obs_dim = 0, num_categories = 0;
  std::vector<float> obs;        // [T, E, A, obs_dim]
  std::vector<int32_t> actions;  // [T, E, A, C]
  std::vector<float> rewards;    // [T, E, A]
  std::vector<uint8_t> done;     // [T, E]
  std::vector<uint8_t> active;   // [T, E, A]
  std::vector<double> values;    // [T, E, A] value estimates at collection
  std::vector<double> logp;      // [T, E, A] log-prob of the taken action
  std::vector<double> bootstrap; // [E, A] value of the observation after the last step

  void resize(int64_t horizon, int64_t envs, int64_t agents, int64_t obs_dim, int64_t categories);
  int64_t rows() const { return horizon * num_envs * num_agents; }
};

// Discounted returns R_t = r_t + gamma * (1 - done_t) * R_{t+1}, bootstrapped
// past the horizon by batch.bootstrap. Output is [T, E, A].
std::vector<double> compute_returns(const RolloutBatch& batch, double gamma);

// Loss statistics, reported as means over active rows.
struct LossTerms {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;    // unscaled (V - R)^2 mean
  double entropy = 0.0;  // summed over action categories
  int64_t active_rows = 0;
};

// Per-row loss + gradients w.r.t. logits and values for a slice of rows that
// all belong to one update. inv_active is 1 / (active rows of the whole
// batch); sums are returned unscaled so chunks can be accumulated.
LossTerms a2c_row_grads(const TrainerConfig& cfg, const PolicyDims& dims,
                        std::span<const double> logits, std::span<const double> values,
                        std::span<const int32_t> actions, std::span<const double> returns,
                        std::span<const double> advantages, std::span<const uint8_t> mask,
                        double inv_active, std::span<double> dlogits, std::span<double> dvalues);

LossTerms ppo_row_grads(const TrainerConfig& cfg, const PolicyDims& dims,
                        std::span<const double> logits, std::span<const double> values,
                        std::span<const int32_t> actions, std::span<const double> returns,
                        std::span<const double> advantages, std::span<const double> old_logp,
                        std::span<const uint8_t> mask, double inv_active,
                        std::span<double> dlogits, std::span<double> dvalues);

// Gradient-clipped Adam step (beta1 0.9, beta2 0.999, eps 1e-8).
void adam_update(PolicyParams& params, AdamState& state, PolicyGrads& grads,
                 const TrainerConfig& cfg);

// Sums each tag's agents' rewards per env and closes an episode when the env
// reports done. Call accumulate() after each step and finish_done() before
// the reset clears the flags.
class EpisodeTracker {
 public:
  EpisodeTracker(const DataStore& store, const PolicyMap& map);
  void accumulate(const DataStore& store);
  void finish_done(const DataStore& store);
  // Per-tag episode reward sums completed since the last drain.
  std::map<std::string, std::vector<double>> drain();
  const std::map<std::string, std::vector<double>>& completed() const { return completed_; }

 private:
  std::vector<std::pair<std::string, std::vector<int64_t>>> groups_;
  std::vector<std::vector<double>> running_;  // [group][env]
  std::map<std::string, std::vector<double>> completed_;
};

struct IterationRow {
  int64_t iteration = 0;
  double wall_ms = 0.0;
  double steps_per_sec = 0.0;
  std::vector<double> mean_episode_reward;   // NaN when no episode completed
  std::vector<int64_t> episodes_completed;   // aligned with Trainer::tags()
  double total_loss = 0.0, policy_loss = 0.0, value_loss = 0.0, entropy = 0.0;
};

// On-policy training loop: collect a rollout through the engine, compute
// returns, apply one A2C pass (or ppo_epochs clipped passes) per policy tag.
class Trainer {
 public:
  Trainer(StepEngine& engine, DataStore& store, const PhasePlan& plan, ResetManager& resets,
          TrainerConfig cfg, PolicyMap policy_map, int64_t action_choices);

  const std::vector<std::string>& tags() const { return tag_names_; }
  PolicyParams& params(const std::string& tag);
  AdamState& adam(const std::string& tag);
  const TrainerConfig& config() const { return cfg_; }

  // Fills one rollout (horizon steps) using the current policies.
  void collect(RolloutBatch& batch);

  // Runs cfg.iterations iterations; rows are numbered from start_iteration+1.
  // on_iteration fires after each iteration (metrics streaming, checkpoints).
  std::vector<IterationRow> train(int64_t start_iteration = 0,
                                  const std::function<void(const IterationRow&)>& on_iteration = {});

 private:
  struct TagState {
    std::string name;
    std::vector<int64_t> agents;
    PolicyParams params;
    AdamState adam;
  };

  void forward_rows(const TagState& ts, std::span<const double> x, int64_t rows,
                    std::span<double> logits_out, std::span<double> values_out);
  LossTerms update_tag(TagState& ts, const RolloutBatch& batch, std::span<const double> returns);

  StepEngine& engine_;
  DataStore& store_;
  const PhasePlan& plan_;
  ResetManager& resets_;
  TrainerConfig cfg_;
  std::vector<std::string> tag_names_;
  std::vector<TagState> tags_;
  EpisodeTracker tracker_;
  int64_t action_choices_;
  int64_t global_step_ = 0;

  ArrayHandle h_obs_, h_actions_, h_rewards_, h_done_, h_active_;
};

}  // namespace warp
