#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "warp/data_store.hpp"

namespace warp {

// One simulation step = an ordered list of phases with a full barrier between
// consecutive phases. Work unit is one environment: a phase's work for env e
// (all agents, ascending index) runs on exactly one worker, so results are
// bit-identical for any worker count.

enum class Granularity : uint8_t { PerAgent, PerEnv };

// Declared write ownership of a phase. AgentSlice = each kernel invocation
// writes only the (env, agent) slice it owns; EnvRow = one logical writer
// per environment row.
enum class WriteScope : uint8_t { AgentSlice, EnvRow };

struct WriteClaim {
  std::string array;
  WriteScope scope = WriteScope::AgentSlice;
};

struct KernelArgs {
  DataStore& store;
  int64_t env_id = 0;
  int64_t agent_id = 0;  // -1 in per-env phases
  int64_t step_index = 0;
};

using KernelFn = std::function<void(const KernelArgs&)>;

struct Phase {
  std::string name;
  Granularity granularity = Granularity::PerAgent;
  std::vector<WriteClaim> writes;
  KernelFn kernel;
};

struct PhasePlan {
  std::vector<Phase> phases;
};

struct EngineConfig {
  int64_t num_envs = 1;
  int64_t num_agents = 1;
  int worker_count = 1;  // <= 0 picks std::thread::hardware_concurrency()
  bool deterministic = true;
};

struct Diagnostic {
  std::string phase;
  std::string message;
};

// Kernel failures surface with the coordinates of the failing invocation.
// Simulation state after a failed step is undefined.
class StepError : public Error {
 public:
  StepError(std::string phase, int64_t env_id, int64_t agent_id, const std::string& what)
      : Error(Errc::step_failure, what), phase_(std::move(phase)), env_id_(env_id),
        agent_id_(agent_id) {}
  const std::string& phase() const noexcept { return phase_; }
  int64_t env_id() const noexcept { return env_id_; }
  int64_t agent_id() const noexcept { return agent_id_; }

 private:
  std::string phase_;
  int64_t env_id_;
  int64_t agent_id_;
};

// Per-step callbacks around the simulation step, invoked in fixed order:
// policy_forward, sample, <step phases>, post_step, auto_reset.
struct RolloutHooks {
  std::function<void(int64_t step)> policy_forward;
  std::function<void(int64_t step)> sample;
  std::function<void(int64_t step)> post_step;
  std::function<void(int64_t step)> auto_reset;
};

class StepEngine {
 public:
  explicit StepEngine(const EngineConfig& cfg);
  ~StepEngine();

  StepEngine(const StepEngine&) = delete;
  StepEngine& operator=(const StepEngine&) = delete;

  int worker_count() const noexcept { return worker_count_; }

  void run_step(const PhasePlan& plan, DataStore& store, int64_t step_index);
  void run_rollout(const PhasePlan& plan, DataStore& store, int64_t horizon,
                   const RolloutHooks& hooks);

  // Structural checks on a plan. Passing the store additionally verifies the
  // write claims against registered array shapes. Returns an empty vector iff
  // the plan is well-formed.
  static std::vector<Diagnostic> validate(const PhasePlan& plan, const DataStore* store = nullptr);

 private:
  void run_phase(const Phase& phase, DataStore& store, int64_t step_index);
  void process_env(const Phase& phase, DataStore& store, int64_t step_index, int64_t env_id);
  void drain(const Phase& phase, DataStore& store, int64_t step_index);
  void helper_loop();

  EngineConfig cfg_;
  int worker_count_;

  std::vector<std::thread> helpers_;
  std::atomic<uint64_t> epoch_{0};
  std::atomic<int64_t> next_env_{0};
  std::atomic<int64_t> completed_{0};
  std::atomic<bool> shutdown_{false};
  std::atomic<bool> failed_{false};
  const Phase* cur_phase_ = nullptr;
  DataStore* cur_store_ = nullptr;
  int64_t cur_step_ = 0;

  std::mutex mutex_;
  std::condition_variable cv_;

  std::mutex error_mutex_;
  std::string error_phase_;
  int64_t error_env_ = -1;
  int64_t error_agent_ = -1;
  std::string error_message_;
};

}  // namespace warp
