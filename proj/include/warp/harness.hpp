#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "warp/reset_manager.hpp"
#include "warp/tag_env.hpp"
#include "warp/trainer.hpp"

namespace warp {

// Front-end wiring: JSON run config in, CSV/JSON reports out. Modes:
//   check        engine vs sequential reference, bit-exact, all variant/obs
//                combinations and worker counts
//   bench-envs   rollout steps/sec and end-to-end iterations/sec vs env count
//   bench-agents per-env step time vs agent count, partial and full obs
//   train        A2C/PPO training with metrics, checkpoints, optional dumps

struct RunSettings {
  std::string mode;
  std::string output_dir;
  int64_t check_steps = 100;
  std::vector<int64_t> env_counts = {1, 2, 4};
  std::vector<int64_t> agent_counts = {10, 100, 1000};
  std::vector<std::string> bench_obs_modes = {"partial", "full"};
  double bench_budget_ms = 1000.0;
  int64_t bench_reps = 3;
  bool dump_trajectory = false;
  std::vector<std::string> dump_arrays;
  std::string resume_from;
};

struct RunConfig {
  TagConfig env;
  EngineConfig engine;
  TrainerConfig trainer;
  RunSettings run;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);
  std::string to_json_string() const;
  // FNV-1a over the canonical serialized form of the effective config.
  std::string config_hash() const;
  void validate() const;
};

struct ReportMeta {
  std::string mode;
  std::string version;
  std::string config_hash;
  uint64_t env_seed = 0;
  uint64_t trainer_seed = 0;
  int cores = 0;
  int workers = 0;
};

// String-celled table with key=value metadata; the CSV reports round-trip
// through this exactly.
struct Table {
  std::map<std::string, std::string> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  bool operator==(const Table&) const = default;
  void write_csv(const std::string& path) const;
  static Table read_csv(const std::string& path);
};

std::string format_double(double v);

struct Divergence {
  int64_t step = -1;
  std::string array;
  int64_t env = -1;
  int64_t agent = -1;
  int64_t index = -1;
};

struct CheckCombo {
  std::string variant;
  std::string obs_mode;
  int workers = 1;
  int64_t steps = 0;
  bool passed = false;
  std::optional<Divergence> divergence;
  double wall_ms = 0.0;
};

struct CheckReport {
  ReportMeta meta;
  std::vector<CheckCombo> combos;
  bool passed = false;
  Table table() const;
  std::string to_json_string() const;
  std::string summary() const;
};

struct BenchEnvsRow {
  int64_t env_count = 0;
  double steps_per_sec = 0.0;
  double iterations_per_sec = 0.0;
};

struct BenchEnvsReport {
  ReportMeta meta;
  std::vector<BenchEnvsRow> rows;
  Table table() const;
  std::string to_json_string() const;
  std::string summary() const;
};

struct BenchAgentsRow {
  std::string obs_mode;
  int64_t agent_count = 0;
  double per_env_step_us = 0.0;
};

struct BenchAgentsReport {
  ReportMeta meta;
  std::vector<BenchAgentsRow> rows;
  // Least-squares slope of log(step time) vs log(agent count), per obs mode.
  std::map<std::string, double> slopes;
  Table table() const;
  std::string to_json_string() const;
  std::string summary() const;
};

struct TrainingReport {
  ReportMeta meta;
  std::vector<std::string> tags;
  std::vector<IterationRow> rows;
  Table table() const;
  std::string to_json_string() const;
  std::string summary() const;
};

// One fully wired world: store + plan + engine + resets for a Tag config.
struct Workspace {
  TagConfig env_cfg;
  EngineConfig engine_cfg;
  std::unique_ptr<DataStore> store;
  TagPlan plan;
  std::unique_ptr<StepEngine> engine;
  std::unique_ptr<ResetManager> resets;
};

Workspace build_workspace(const TagConfig& env_cfg, const EngineConfig& engine_cfg);

// Steps `steps` times sampling from the given per-tag policies (uniform
// random actions when `policies` is null) and reports the mean episode reward
// sum per tag over completed episodes.
std::map<std::string, double> evaluate_policies(
    Workspace& ws, const PolicyMap& map,
    const std::map<std::string, const PolicyParams*>* policies, int64_t steps, uint64_t seed);

// Lockstep engine-vs-reference comparison for one (variant, obs_mode, workers)
// combination; arrays compared bit-exactly each step in the order
// sampled_actions, rewards, done, observations.
CheckCombo check_consistency_single(const RunConfig& config, TagVariant variant, ObsMode obs_mode,
                                    int workers);

// Full matrix: both variants x both obs modes x workers {1, 2, max}.
CheckReport check_consistency(const RunConfig& config);

BenchEnvsReport bench_envs(const RunConfig& config);
BenchAgentsReport bench_agents(const RunConfig& config);

// Trains per config; writes metrics.csv, report JSON, checkpoints and the
// optional dumps under run.output_dir. Non-finite loss aborts with a
// checkpoint tagged "diverged". Pass keep_workspace to receive the final
// post-training world (e.g. for array dumps).
TrainingReport run_training(const RunConfig& config,
                            std::unique_ptr<Workspace>* keep_workspace = nullptr);

// Tagger/runner grouping used by training: agents [0, num_taggers) share the
// "tagger" policy, the rest share "runner".
PolicyMap tag_policy_map(const TagConfig& cfg);

// Debug dump: one CSV row per env, features flattened.
void dump_array_csv(const DataStore& store, const std::string& array, const std::string& path);

// Trajectory of a single fresh env under the given policies, for offline
// plotting: rows (step, env, agent, x, y, active, is_tagger), exactly
// episode_length * num_agents of them.
void dump_trajectory_csv(const TagConfig& cfg,
                         const std::map<std::string, const PolicyParams*>& policies,
                         const PolicyMap& map, const std::string& path);

}  // namespace warp
