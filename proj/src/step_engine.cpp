#include "warp/step_engine.hpp"

namespace warp {

namespace {

inline void cpu_relax() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_ia32_pause();
#else
  std::this_thread::yield();
#endif
}

}  // namespace

StepEngine::StepEngine(const EngineConfig& cfg) : cfg_(cfg) {
  if (cfg.num_envs < 1 || cfg.num_agents < 1) {
    raise(Errc::invalid_argument, "EngineConfig: num_envs and num_agents must be >= 1");
  }
  if (!cfg.deterministic) {
    raise(Errc::invalid_argument, "EngineConfig: only deterministic execution exists in v1");
  }
  int workers = cfg.worker_count;
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  worker_count_ = workers;
  // The calling thread participates, so only worker_count-1 helpers spawn.
  helpers_.reserve(static_cast<size_t>(worker_count_ - 1));
  for (int i = 0; i < worker_count_ - 1; ++i) {
    helpers_.emplace_back([this] { helper_loop(); });
  }
}

StepEngine::~StepEngine() {
  {
    std::lock_guard<std::mutex> lk(mutex_);
    shutdown_.store(true, std::memory_order_release);
  }
  cv_.notify_all();
  for (std::thread& t : helpers_) t.join();
}

void StepEngine::process_env(const Phase& phase, DataStore& store, int64_t step_index,
                             int64_t env_id) {
  KernelArgs args{store, env_id, -1, step_index};
  try {
    if (phase.granularity == Granularity::PerEnv) {
      phase.kernel(args);
    } else {
      for (int64_t a = 0; a < cfg_.num_agents; ++a) {
        args.agent_id = a;
        phase.kernel(args);
      }
    }
  } catch (const std::exception& e) {
    std::lock_guard<std::mutex> lk(error_mutex_);
    if (!failed_.exchange(true, std::memory_order_acq_rel)) {
      error_phase_ = phase.name;
      error_env_ = env_id;
      error_agent_ = args.agent_id;
      error_message_ = e.what();
    }
  }
}

void StepEngine::drain(const Phase& phase, DataStore& store, int64_t step_index) {
  for (;;) {
    const int64_t env = next_env_.fetch_add(1, std::memory_order_relaxed);
    if (env >= cfg_.num_envs) return;
    if (!failed_.load(std::memory_order_acquire)) {
      process_env(phase, store, step_index, env);
    }
    completed_.fetch_add(1, std::memory_order_release);
  }
}

void StepEngine::helper_loop() {
  uint64_t seen = 0;
  for (;;) {
    int spins = 0;
    while (epoch_.load(std::memory_order_acquire) == seen &&
           !shutdown_.load(std::memory_order_acquire)) {
      if (++spins < 8192) {
        cpu_relax();
      } else {
        std::unique_lock<std::mutex> lk(mutex_);
        cv_.wait(lk, [&] {
          return epoch_.load(std::memory_order_acquire) != seen ||
                 shutdown_.load(std::memory_order_acquire);
        });
      }
    }
    if (shutdown_.load(std::memory_order_acquire)) return;
    seen = epoch_.load(std::memory_order_acquire);
    drain(*cur_phase_, *cur_store_, cur_step_);
  }
}

void StepEngine::run_phase(const Phase& phase, DataStore& store, int64_t step_index) {
  if (worker_count_ == 1 || cfg_.num_envs == 1) {
    for (int64_t env = 0; env < cfg_.num_envs && !failed_.load(std::memory_order_acquire); ++env) {
      process_env(phase, store, step_index, env);
    }
    return;
  }
  cur_phase_ = &phase;
  cur_store_ = &store;
  cur_step_ = step_index;
  next_env_.store(0, std::memory_order_relaxed);
  completed_.store(0, std::memory_order_relaxed);
  {
    std::lock_guard<std::mutex> lk(mutex_);
    epoch_.fetch_add(1, std::memory_order_release);
  }
  cv_.notify_all();
  drain(phase, store, step_index);
  // Barrier: wait until every environment's work for this phase retired.
  while (completed_.load(std::memory_order_acquire) < cfg_.num_envs) cpu_relax();
}

void StepEngine::run_step(const PhasePlan& plan, DataStore& store, int64_t step_index) {
  if (!store.locked()) raise(Errc::state_error, "run_step: store is not locked");
  if (store.num_envs() != cfg_.num_envs || store.num_agents() != cfg_.num_agents) {
    raise(Errc::shape_mismatch, "run_step: store dims do not match engine config");
  }
  failed_.store(false, std::memory_order_release);
  for (const Phase& phase : plan.phases) {
    run_phase(phase, store, step_index);
    if (failed_.load(std::memory_order_acquire)) {
      std::lock_guard<std::mutex> lk(error_mutex_);
      throw StepError(error_phase_, error_env_, error_agent_,
                      "step " + std::to_string(step_index) + " failed in phase \"" + error_phase_ +
                          "\" at env " + std::to_string(error_env_) + ", agent " +
                          std::to_string(error_agent_) + ": " + error_message_);
    }
  }
}

void StepEngine::run_rollout(const PhasePlan& plan, DataStore& store, int64_t horizon,
                             const RolloutHooks& hooks) {
  if (horizon < 1) raise(Errc::invalid_argument, "run_rollout: horizon must be >= 1");
  for (int64_t t = 0; t < horizon; ++t) {
    if (hooks.policy_forward) hooks.policy_forward(t);
    if (hooks.sample) hooks.sample(t);
    run_step(plan, store, t);
    if (hooks.post_step) hooks.post_step(t);
    if (hooks.auto_reset) hooks.auto_reset(t);
  }
}

std::vector<Diagnostic> StepEngine::validate(const PhasePlan& plan, const DataStore* store) {
  std::vector<Diagnostic> out;
  if (plan.phases.empty()) {
    out.push_back({"", "no phases"});
    return out;
  }
  for (const Phase& phase : plan.phases) {
    if (!phase.kernel) out.push_back({phase.name, "phase has no kernel"});
    for (const WriteClaim& claim : phase.writes) {
      if (phase.granularity == Granularity::PerAgent && claim.scope == WriteScope::EnvRow) {
        out.push_back({phase.name, "ownership: per-agent phase declares env-row write to \"" +
                                       claim.array + "\" (slices owned by other agents)"});
      }
      if (store != nullptr) {
        if (!store->has_array(claim.array)) {
          out.push_back({phase.name, "write claim on unregistered array \"" + claim.array + "\""});
          continue;
        }
        const ArrayInfo& info = store->info(claim.array);
        if (claim.scope == WriteScope::AgentSlice && !info.has_agent_axis) {
          out.push_back({phase.name, "ownership: agent-slice claim on \"" + claim.array +
                                         "\" which has no agent axis"});
        }
      }
    }
  }
  return out;
}

}  // namespace warp
