#include "warp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "warp/parallel.hpp"
#include "warp/sampler.hpp"

namespace warp {

namespace {

constexpr int64_t kGradChunk = 1024;

// log-prob of the chosen action and entropy for one category's logit row.
struct CategoryStats {
  double logp = 0.0;
  double entropy = 0.0;
  double lse = 0.0;   // log-sum-exp
  double zmax = 0.0;
};

CategoryStats category_stats(const double* z, int64_t n, int32_t action) {
  CategoryStats s;
  s.zmax = z[0];
  for (int64_t i = 1; i < n; ++i) s.zmax = std::max(s.zmax, z[i]);
  double sum = 0.0, weighted = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double e = std::exp(z[i] - s.zmax);
    sum += e;
    weighted += e * (z[i] - s.zmax);
  }
  s.lse = std::log(sum);
  s.logp = z[action] - s.zmax - s.lse;
  // H = lse - E[z - zmax]
  s.entropy = s.lse - weighted / sum;
  return s;
}

}  // namespace

void TrainerConfig::validate() const {
  auto fail = [](const std::string& m) { raise(Errc::invalid_config, "TrainerConfig: " + m); };
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must be in (0, 1)");
  if (rollout_horizon < 1) fail("rollout_horizon must be >= 1");
  if (learning_rate <= 0.0) fail("learning_rate must be > 0");
  if (ppo_clip <= 0.0) fail("ppo_clip must be > 0");
  if (ppo_epochs < 1) fail("ppo_epochs must be >= 1");
  if (max_grad_norm <= 0.0) fail("max_grad_norm must be > 0");
  if (iterations < 0) fail("iterations must be >= 0");
  if (hidden_sizes.empty()) fail("hidden_sizes must not be empty");
}

void RolloutBatch::resize(int64_t h, int64_t envs, int64_t agents, int64_t od, int64_t cats) {
  horizon = h;
  num_envs = envs;
  num_agents = agents;
  obs_dim = od;
  num_categories = cats;
  const size_t rows_ = static_cast<size_t>(h * envs * agents);
  obs.assign(rows_ * static_cast<size_t>(od), 0.0f);
  actions.assign(rows_ * static_cast<size_t>(cats), 0);
  rewards.assign(rows_, 0.0f);
  done.assign(static_cast<size_t>(h * envs), 0);
  active.assign(rows_, 0);
  values.assign(rows_, 0.0);
  logp.assign(rows_, 0.0);
  bootstrap.assign(static_cast<size_t>(envs * agents), 0.0);
}

std::vector<double> compute_returns(const RolloutBatch& batch, double gamma) {
  const int64_t T = batch.horizon, E = batch.num_envs, A = batch.num_agents;
  std::vector<double> returns(static_cast<size_t>(T * E * A), 0.0);
  for (int64_t e = 0; e < E; ++e) {
    for (int64_t a = 0; a < A; ++a) {
      double next = batch.bootstrap[static_cast<size_t>(e * A + a)];
      for (int64_t t = T - 1; t >= 0; --t) {
        const size_t idx = static_cast<size_t>((t * E + e) * A + a);
        const double cont = batch.done[static_cast<size_t>(t * E + e)] ? 0.0 : 1.0;
        next = static_cast<double>(batch.rewards[idx]) + gamma * cont * next;
        returns[idx] = next;
      }
    }
  }
  return returns;
}

LossTerms a2c_row_grads(const TrainerConfig& cfg, const PolicyDims& dims,
                        std::span<const double> logits, std::span<const double> values,
                        std::span<const int32_t> actions, std::span<const double> returns,
                        std::span<const double> advantages, std::span<const uint8_t> mask,
                        double inv_active, std::span<double> dlogits, std::span<double> dvalues) {
  const int64_t n = static_cast<int64_t>(values.size());
  const int64_t C = dims.num_categories, V = dims.num_choices, W = dims.logits_width();
  LossTerms terms;
  std::fill(dlogits.begin(), dlogits.end(), 0.0);
  std::fill(dvalues.begin(), dvalues.end(), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    terms.active_rows += 1;
    const double adv = advantages[static_cast<size_t>(i)];
    double logp_row = 0.0, ent_row = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      const double* z = logits.data() + i * W + c * V;
      double* dz = dlogits.data() + i * W + c * V;
      const int32_t act = actions[static_cast<size_t>(i * C + c)];
      const CategoryStats s = category_stats(z, V, act);
      logp_row += s.logp;
      ent_row += s.entropy;
      for (int64_t k = 0; k < V; ++k) {
        const double p = std::exp(z[k] - s.zmax - s.lse);
        const double logpk = z[k] - s.zmax - s.lse;
        const double onehot = (k == act) ? 1.0 : 0.0;
        dz[k] = inv_active * (adv * (p - onehot) + cfg.entropy_coef * p * (logpk + s.entropy));
      }
    }
    const double diff = values[static_cast<size_t>(i)] - returns[static_cast<size_t>(i)];
    dvalues[static_cast<size_t>(i)] = inv_active * 2.0 * cfg.value_coef * diff;
    terms.policy += -logp_row * adv;
    terms.value += diff * diff;
    terms.entropy += ent_row;
  }
  terms.total = terms.policy + cfg.value_coef * terms.value - cfg.entropy_coef * terms.entropy;
  if (!std::isfinite(terms.total)) raise(Errc::non_finite, "a2c loss is not finite");
  return terms;
}

LossTerms ppo_row_grads(const TrainerConfig& cfg, const PolicyDims& dims,
                        std::span<const double> logits, std::span<const double> values,
                        std::span<const int32_t> actions, std::span<const double> returns,
                        std::span<const double> advantages, std::span<const double> old_logp,
                        std::span<const uint8_t> mask, double inv_active,
                        std::span<double> dlogits, std::span<double> dvalues) {
  const int64_t n = static_cast<int64_t>(values.size());
  const int64_t C = dims.num_categories, V = dims.num_choices, W = dims.logits_width();
  LossTerms terms;
  std::fill(dlogits.begin(), dlogits.end(), 0.0);
  std::fill(dvalues.begin(), dvalues.end(), 0.0);
  std::vector<CategoryStats> stats(static_cast<size_t>(C));
  for (int64_t i = 0; i < n; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    terms.active_rows += 1;
    const double adv = advantages[static_cast<size_t>(i)];
    double logp_new = 0.0, ent_row = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      const double* z = logits.data() + i * W + c * V;
      stats[static_cast<size_t>(c)] =
          category_stats(z, V, actions[static_cast<size_t>(i * C + c)]);
      logp_new += stats[static_cast<size_t>(c)].logp;
      ent_row += stats[static_cast<size_t>(c)].entropy;
    }
    const double ratio = std::exp(logp_new - old_logp[static_cast<size_t>(i)]);
    const double clipped = std::min(std::max(ratio, 1.0 - cfg.ppo_clip), 1.0 + cfg.ppo_clip);
    const double s_plain = ratio * adv;
    const double s_clip = clipped * adv;
    const bool flow = s_plain <= s_clip;  // min(.,.) picks the plain branch
    terms.policy += -std::min(s_plain, s_clip);
    for (int64_t c = 0; c < C; ++c) {
      const double* z = logits.data() + i * W + c * V;
      double* dz = dlogits.data() + i * W + c * V;
      const CategoryStats& s = stats[static_cast<size_t>(c)];
      const int32_t act = actions[static_cast<size_t>(i * C + c)];
      for (int64_t k = 0; k < V; ++k) {
        const double p = std::exp(z[k] - s.zmax - s.lse);
        const double logpk = z[k] - s.zmax - s.lse;
        const double onehot = (k == act) ? 1.0 : 0.0;
        double g = cfg.entropy_coef * p * (logpk + s.entropy);
        if (flow) g += adv * ratio * (p - onehot);
        dz[k] = inv_active * g;
      }
    }
    const double diff = values[static_cast<size_t>(i)] - returns[static_cast<size_t>(i)];
    dvalues[static_cast<size_t>(i)] = inv_active * 2.0 * cfg.value_coef * diff;
    terms.value += diff * diff;
    terms.entropy += ent_row;
  }
  terms.total = terms.policy + cfg.value_coef * terms.value - cfg.entropy_coef * terms.entropy;
  if (!std::isfinite(terms.total)) raise(Errc::non_finite, "ppo loss is not finite");
  return terms;
}

void adam_update(PolicyParams& params, AdamState& state, PolicyGrads& grads,
                 const TrainerConfig& cfg) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  std::vector<double*> theta;
  theta.reserve(static_cast<size_t>(params.param_count()));
  params.for_each_param([&theta](double& p) { theta.push_back(&p); });
  std::vector<double> flat;
  flat.reserve(theta.size());
  grads.for_each([&flat](double& g) { flat.push_back(g); });
  if (flat.size() != theta.size()) raise(Errc::shape_mismatch, "adam_update: grads do not match");

  double norm_sq = 0.0;
  for (double g : flat) norm_sq += g * g;
  const double norm = std::sqrt(norm_sq);
  if (norm > cfg.max_grad_norm) {
    const double scale = cfg.max_grad_norm / norm;
    for (double& g : flat) g *= scale;
  }

  if (state.m.size() != flat.size()) {
    state.m.assign(flat.size(), 0.0);
    state.v.assign(flat.size(), 0.0);
    state.t = 0;
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  for (size_t i = 0; i < flat.size(); ++i) {
    state.m[i] = kBeta1 * state.m[i] + (1.0 - kBeta1) * flat[i];
    state.v[i] = kBeta2 * state.v[i] + (1.0 - kBeta2) * flat[i] * flat[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    *theta[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + kEps);
  }
}

EpisodeTracker::EpisodeTracker(const DataStore& store, const PolicyMap& map) {
  for (const auto& [tag, agents] : map) {
    groups_.emplace_back(tag, agents);
    running_.emplace_back(static_cast<size_t>(store.num_envs()), 0.0);
    completed_[tag] = {};
  }
}

void EpisodeTracker::accumulate(const DataStore& store) {
  std::span<const float> rewards = store.f32(store.handle(kRewards));
  const int64_t A = store.num_agents();
  for (size_t g = 0; g < groups_.size(); ++g) {
    for (int64_t e = 0; e < store.num_envs(); ++e) {
      double sum = 0.0;
      for (int64_t a : groups_[g].second) sum += rewards[static_cast<size_t>(e * A + a)];
      running_[g][static_cast<size_t>(e)] += sum;
    }
  }
}

void EpisodeTracker::finish_done(const DataStore& store) {
  std::span<const uint8_t> done = store.u8(store.handle(kDone));
  for (size_t g = 0; g < groups_.size(); ++g) {
    auto& out = completed_[groups_[g].first];
    for (int64_t e = 0; e < store.num_envs(); ++e) {
      if (done[static_cast<size_t>(e)]) {
        out.push_back(running_[g][static_cast<size_t>(e)]);
        running_[g][static_cast<size_t>(e)] = 0.0;
      }
    }
  }
}

std::map<std::string, std::vector<double>> EpisodeTracker::drain() {
  std::map<std::string, std::vector<double>> out = completed_;
  for (auto& [tag, v] : completed_) v.clear();
  return out;
}

Trainer::Trainer(StepEngine& engine, DataStore& store, const PhasePlan& plan,
                 ResetManager& resets, TrainerConfig cfg, PolicyMap policy_map,
                 int64_t action_choices)
    : engine_(engine), store_(store), plan_(plan), resets_(resets), cfg_(std::move(cfg)),
      tracker_(store, policy_map), action_choices_(action_choices) {
  cfg_.validate();
  validate_policy_map(policy_map, store.num_agents());
  if (!store.locked()) raise(Errc::state_error, "Trainer: store must be locked");

  h_obs_ = store.handle(kObservations);
  h_actions_ = store.handle(kSampledActions);
  h_rewards_ = store.handle(kRewards);
  h_done_ = store.handle(kDone);
  h_active_ = store.handle("active");

  const ArrayInfo& obs_info = store.info(h_obs_);
  const int64_t obs_dim = obs_info.agent_stride;
  const int64_t categories = store.info(h_actions_).agent_stride;

  PolicyDims dims;
  dims.obs_dim = obs_dim;
  dims.hidden = cfg_.hidden_sizes;
  dims.num_categories = categories;
  dims.num_choices = action_choices;

  uint64_t tag_index = 0;
  for (const auto& [tag, agents] : policy_map) {
    TagState ts;
    ts.name = tag;
    ts.agents = agents;
    ts.params = init_policy(detail::mix64(cfg_.seed) + tag_index++, dims);
    tags_.push_back(std::move(ts));
    tag_names_.push_back(tag);
  }
}

PolicyParams& Trainer::params(const std::string& tag) {
  for (TagState& ts : tags_) {
    if (ts.name == tag) return ts.params;
  }
  raise(Errc::unknown_name, "Trainer: unknown policy tag \"" + tag + "\"");
}

AdamState& Trainer::adam(const std::string& tag) {
  for (TagState& ts : tags_) {
    if (ts.name == tag) return ts.adam;
  }
  raise(Errc::unknown_name, "Trainer: unknown policy tag \"" + tag + "\"");
}

void Trainer::forward_rows(const TagState& ts, std::span<const double> x, int64_t rows,
                           std::span<double> logits_out, std::span<double> values_out) {
  forward_parallel(ts.params, x, rows, engine_.worker_count(), logits_out, values_out);
}

void Trainer::collect(RolloutBatch& batch) {
  const int64_t E = store_.num_envs();
  const int64_t A = store_.num_agents();
  const int64_t D = store_.info(h_obs_).agent_stride;
  const int64_t C = store_.info(h_actions_).agent_stride;
  const int64_t V = action_choices_;
  const int64_t T = cfg_.rollout_horizon;
  batch.resize(T, E, A, D, C);

  std::vector<double> logits_all(static_cast<size_t>(E * A * C * V), 0.0);
  std::vector<double> values_all(static_cast<size_t>(E * A), 0.0);
  std::vector<double> x;  // gathered per-tag observation rows

  auto forward_all = [&]() {
    std::span<const float> obs = store_.f32(h_obs_);
    for (const TagState& ts : tags_) {
      const int64_t rows = E * static_cast<int64_t>(ts.agents.size());
      x.resize(static_cast<size_t>(rows * D));
      std::vector<double> logits_tag(static_cast<size_t>(rows * C * V));
      std::vector<double> values_tag(static_cast<size_t>(rows));
      int64_t r = 0;
      for (int64_t e = 0; e < E; ++e) {
        for (int64_t a : ts.agents) {
          const float* src = obs.data() + (e * A + a) * D;
          double* dst = x.data() + r * D;
          for (int64_t d = 0; d < D; ++d) dst[d] = static_cast<double>(src[d]);
          ++r;
        }
      }
      forward_rows(ts, x, rows, logits_tag, values_tag);
      r = 0;
      for (int64_t e = 0; e < E; ++e) {
        for (int64_t a : ts.agents) {
          std::memcpy(logits_all.data() + (e * A + a) * C * V, logits_tag.data() + r * C * V,
                      static_cast<size_t>(C * V) * sizeof(double));
          values_all[static_cast<size_t>(e * A + a)] = values_tag[static_cast<size_t>(r)];
          ++r;
        }
      }
    }
  };

  RolloutHooks hooks;
  hooks.policy_forward = [&](int64_t t) {
    std::span<const float> obs = store_.f32(h_obs_);
    std::memcpy(batch.obs.data() + t * E * A * D, obs.data(),
                static_cast<size_t>(E * A * D) * sizeof(float));
    forward_all();
    std::memcpy(batch.values.data() + t * E * A, values_all.data(),
                static_cast<size_t>(E * A) * sizeof(double));
  };
  hooks.sample = [&](int64_t t) {
    sample_actions(store_, logits_all, C, V, global_step_++, cfg_.seed);
    std::span<const int32_t> actions = store_.i32(h_actions_);
    std::memcpy(batch.actions.data() + t * E * A * C, actions.data(),
                static_cast<size_t>(E * A * C) * sizeof(int32_t));
    std::span<const uint8_t> act_flags = store_.u8(h_active_);
    std::memcpy(batch.active.data() + t * E * A, act_flags.data(), static_cast<size_t>(E * A));
    for (int64_t i = 0; i < E * A; ++i) {
      double lp = 0.0;
      for (int64_t c = 0; c < C; ++c) {
        const double* z = logits_all.data() + i * C * V + c * V;
        lp += category_stats(z, V, actions[static_cast<size_t>(i * C + c)]).logp;
      }
      batch.logp[static_cast<size_t>(t * E * A + i)] = lp;
    }
  };
  hooks.post_step = [&](int64_t t) {
    std::span<const float> rewards = store_.f32(h_rewards_);
    std::memcpy(batch.rewards.data() + t * E * A, rewards.data(),
                static_cast<size_t>(E * A) * sizeof(float));
    std::span<const uint8_t> done = store_.u8(h_done_);
    std::memcpy(batch.done.data() + t * E, done.data(), static_cast<size_t>(E));
    tracker_.accumulate(store_);
    tracker_.finish_done(store_);
  };
  hooks.auto_reset = [&](int64_t) {
    if (!resets_.auto_enabled()) return;
    const std::vector<int64_t> ids = resets_.detect_done(store_);
    resets_.auto_reset(store_, ids);
  };

  engine_.run_rollout(plan_, store_, T, hooks);

  // Bootstrap values of the post-rollout observations.
  forward_all();
  std::memcpy(batch.bootstrap.data(), values_all.data(),
              static_cast<size_t>(E * A) * sizeof(double));
}

LossTerms Trainer::update_tag(TagState& ts, const RolloutBatch& batch,
                              std::span<const double> returns) {
  const int64_t T = batch.horizon, E = batch.num_envs, A = batch.num_agents;
  const int64_t D = batch.obs_dim, C = batch.num_categories;
  const int64_t V = action_choices_;
  const int64_t n_agents = static_cast<int64_t>(ts.agents.size());
  const int64_t rows = T * E * n_agents;
  const int64_t W = C * V;

  // Gather this tag's rows once.
  std::vector<double> x(static_cast<size_t>(rows * D));
  std::vector<int32_t> act(static_cast<size_t>(rows * C));
  std::vector<double> ret(static_cast<size_t>(rows));
  std::vector<double> adv(static_cast<size_t>(rows));
  std::vector<double> old_logp(static_cast<size_t>(rows));
  std::vector<uint8_t> mask(static_cast<size_t>(rows));
  int64_t r = 0;
  int64_t n_active = 0;
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t e = 0; e < E; ++e) {
      for (int64_t a : ts.agents) {
        const int64_t idx = (t * E + e) * A + a;
        const float* src = batch.obs.data() + idx * D;
        double* dst = x.data() + r * D;
        for (int64_t d = 0; d < D; ++d) dst[d] = static_cast<double>(src[d]);
        for (int64_t c = 0; c < C; ++c) {
          act[static_cast<size_t>(r * C + c)] = batch.actions[static_cast<size_t>(idx * C + c)];
        }
        ret[static_cast<size_t>(r)] = returns[static_cast<size_t>(idx)];
        adv[static_cast<size_t>(r)] =
            returns[static_cast<size_t>(idx)] - batch.values[static_cast<size_t>(idx)];
        old_logp[static_cast<size_t>(r)] = batch.logp[static_cast<size_t>(idx)];
        mask[static_cast<size_t>(r)] = batch.active[static_cast<size_t>(idx)];
        n_active += mask[static_cast<size_t>(r)] ? 1 : 0;
        ++r;
      }
    }
  }
  if (n_active == 0) return {};
  const double inv_active = 1.0 / static_cast<double>(n_active);

  if (cfg_.algorithm == Algorithm::PPO) {
    // Advantage normalization over active rows (PPO only).
    double mean = 0.0;
    for (int64_t i = 0; i < rows; ++i) {
      if (mask[static_cast<size_t>(i)]) mean += adv[static_cast<size_t>(i)];
    }
    mean *= inv_active;
    double var = 0.0;
    for (int64_t i = 0; i < rows; ++i) {
      if (mask[static_cast<size_t>(i)]) {
        const double d = adv[static_cast<size_t>(i)] - mean;
        var += d * d;
      }
    }
    const double stdev = std::sqrt(var * inv_active) + 1e-8;
    for (int64_t i = 0; i < rows; ++i) {
      adv[static_cast<size_t>(i)] = (adv[static_cast<size_t>(i)] - mean) / stdev;
    }
  }

  const int64_t epochs = cfg_.algorithm == Algorithm::PPO ? cfg_.ppo_epochs : 1;
  const int64_t n_chunks = (rows + kGradChunk - 1) / kGradChunk;
  LossTerms report;
  for (int64_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<PolicyGrads> partial(static_cast<size_t>(n_chunks));
    std::vector<LossTerms> terms(static_cast<size_t>(n_chunks));
    parallel_chunks(n_chunks, engine_.worker_count(), [&](int64_t ci) {
      const int64_t r0 = ci * kGradChunk;
      const int64_t r1 = std::min(rows, r0 + kGradChunk);
      const int64_t n = r1 - r0;
      ForwardCache cache;
      const ForwardResult res = forward(
          ts.params, std::span<const double>(x).subspan(static_cast<size_t>(r0 * D),
                                                        static_cast<size_t>(n * D)),
          n, &cache);
      std::vector<double> dlogits(static_cast<size_t>(n * W));
      std::vector<double> dvalues(static_cast<size_t>(n));
      auto sub = [&](const std::vector<double>& v, int64_t stride) {
        return std::span<const double>(v).subspan(static_cast<size_t>(r0 * stride),
                                                  static_cast<size_t>(n * stride));
      };
      if (cfg_.algorithm == Algorithm::PPO) {
        terms[static_cast<size_t>(ci)] = ppo_row_grads(
            cfg_, ts.params.dims, res.logits, res.values,
            std::span<const int32_t>(act).subspan(static_cast<size_t>(r0 * C),
                                                  static_cast<size_t>(n * C)),
            sub(ret, 1), sub(adv, 1), sub(old_logp, 1),
            std::span<const uint8_t>(mask).subspan(static_cast<size_t>(r0),
                                                   static_cast<size_t>(n)),
            inv_active, dlogits, dvalues);
      } else {
        terms[static_cast<size_t>(ci)] = a2c_row_grads(
            cfg_, ts.params.dims, res.logits, res.values,
            std::span<const int32_t>(act).subspan(static_cast<size_t>(r0 * C),
                                                  static_cast<size_t>(n * C)),
            sub(ret, 1), sub(adv, 1),
            std::span<const uint8_t>(mask).subspan(static_cast<size_t>(r0),
                                                   static_cast<size_t>(n)),
            inv_active, dlogits, dvalues);
      }
      partial[static_cast<size_t>(ci)] = backward(ts.params, cache, dlogits, dvalues);
    });
    PolicyGrads grads = std::move(partial[0]);
    for (int64_t ci = 1; ci < n_chunks; ++ci) grads.accumulate(partial[static_cast<size_t>(ci)]);
    adam_update(ts.params, ts.adam, grads, cfg_);

    if (epoch == 0) {
      for (const LossTerms& t : terms) {
        report.policy += t.policy;
        report.value += t.value;
        report.entropy += t.entropy;
        report.active_rows += t.active_rows;
      }
    }
  }
  return report;
}

std::vector<IterationRow> Trainer::train(
    int64_t start_iteration, const std::function<void(const IterationRow&)>& on_iteration) {
  using Clock = std::chrono::steady_clock;
  std::vector<IterationRow> rows;
  RolloutBatch batch;
  for (int64_t it = 0; it < cfg_.iterations; ++it) {
    const auto t0 = Clock::now();
    collect(batch);
    const std::vector<double> returns = compute_returns(batch, cfg_.gamma);

    LossTerms combined;
    for (TagState& ts : tags_) {
      const LossTerms t = update_tag(ts, batch, returns);
      combined.policy += t.policy;
      combined.value += t.value;
      combined.entropy += t.entropy;
      combined.active_rows += t.active_rows;
    }
    const double inv = combined.active_rows > 0 ? 1.0 / combined.active_rows : 0.0;

    IterationRow row;
    row.iteration = start_iteration + it + 1;
    const double wall_s =
        std::chrono::duration<double>(Clock::now() - t0).count();
    row.wall_ms = wall_s * 1e3;
    row.steps_per_sec =
        wall_s > 0 ? static_cast<double>(batch.horizon * batch.num_envs) / wall_s : 0.0;
    row.policy_loss = combined.policy * inv;
    row.value_loss = combined.value * inv;
    row.entropy = combined.entropy * inv;
    row.total_loss =
        row.policy_loss + cfg_.value_coef * row.value_loss - cfg_.entropy_coef * row.entropy;

    auto episodes = tracker_.drain();
    for (const std::string& tag : tag_names_) {
      const std::vector<double>& sums = episodes[tag];
      row.episodes_completed.push_back(static_cast<int64_t>(sums.size()));
      double mean = std::numeric_limits<double>::quiet_NaN();
      if (!sums.empty()) {
        mean = 0.0;
        for (double s : sums) mean += s;
        mean /= static_cast<double>(sums.size());
      }
      row.mean_episode_reward.push_back(mean);
    }
    if (on_iteration) on_iteration(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace warp
