#include "warp/tag_env.hpp"

#include <algorithm>
#include <cstring>

#include "warp/neighbor_grid.hpp"
#include "warp/rng.hpp"

namespace warp {

namespace detail {

FaultHooks& fault_hooks() {
  static FaultHooks hooks;
  return hooks;
}

}  // namespace detail

void TagConfig::validate() const {
  auto fail = [](const std::string& msg) { raise(Errc::invalid_config, "TagConfig: " + msg); };
  if (num_taggers < 1) fail("num_taggers must be >= 1");
  if (num_runners < 1) fail("num_runners must be >= 1");
  if (episode_length < 1) fail("episode_length must be >= 1");
  if (tag_reward <= 0.0) fail("tag_reward must be > 0");
  if (tagged_penalty >= 0.0) fail("tagged_penalty must be < 0");
  if (variant == TagVariant::Discrete) {
    if (grid_size < 1) fail("grid_size must be >= 1");
  } else {
    if (world_length <= 0.0) fail("world_length must be > 0");
    if (tag_radius < 0.0) fail("tag_radius must be >= 0");
    if (accel_delta <= 0.0) fail("accel_delta must be > 0");
    if (turn_delta <= 0.0) fail("turn_delta must be > 0");
    if (max_speed_tagger <= 0.0 || max_speed_runner <= 0.0) fail("max speeds must be > 0");
  }
  if (obs_mode == ObsMode::Partial) {
    if (k_nearest < 1) fail("k_nearest must be >= 1");
    if (k_nearest >= num_agents()) fail("k_nearest must be < num_taggers + num_runners");
  }
}

namespace {

// Raw views over one store's tag arrays plus the float-cast constants. Both
// the engine kernels and the sequential reference run on this layout, so all
// float conversions happen exactly once, here.
struct Arrays {
  float* loc_x = nullptr;
  float* loc_y = nullptr;
  float* speed = nullptr;      // continuous only
  float* direction = nullptr;  // continuous only
  float* obs = nullptr;
  float* rewards = nullptr;
  uint8_t* is_tagger = nullptr;
  uint8_t* active = nullptr;
  uint8_t* tagged = nullptr;
  uint8_t* done = nullptr;
  int32_t* step_count = nullptr;
  int32_t* actions = nullptr;
  int32_t* credits = nullptr;

  int64_t A = 0;
  int64_t obs_dim = 0;
  int64_t n_cats = 0;
  bool continuous = false;
  bool partial = false;
  int64_t k = 0;

  float world_hi = 0.0f;   // position clamp upper bound
  float inv_world = 0.0f;  // 1 / side length, for observation scaling
  float accel_delta = 0.0f;
  float turn_delta = 0.0f;
  float tag_radius = 0.0f;
  float inv_episode = 0.0f;
  float reward_per_tag = 0.0f;
  float penalty = 0.0f;
  std::vector<float> max_speed;      // per agent
  std::vector<float> inv_max_speed;  // per agent
};

Arrays bind_arrays(DataStore& store, const TagConfig& cfg) {
  Arrays ar;
  ar.A = cfg.num_agents();
  ar.obs_dim = cfg.obs_dim();
  ar.n_cats = cfg.action_categories();
  ar.continuous = cfg.variant == TagVariant::Continuous;
  ar.partial = cfg.obs_mode == ObsMode::Partial;
  ar.k = cfg.k_nearest;

  ar.loc_x = store.f32(store.handle("loc_x")).data();
  ar.loc_y = store.f32(store.handle("loc_y")).data();
  if (ar.continuous) {
    ar.speed = store.f32(store.handle("speed")).data();
    ar.direction = store.f32(store.handle("direction")).data();
  }
  ar.obs = store.f32(store.handle(kObservations)).data();
  ar.rewards = store.f32(store.handle(kRewards)).data();
  ar.is_tagger = store.u8(store.handle("is_tagger")).data();
  ar.active = store.u8(store.handle("active")).data();
  ar.tagged = store.u8(store.handle("was_tagged")).data();
  ar.done = store.u8(store.handle(kDone)).data();
  ar.step_count = store.i32(store.handle("step_count")).data();
  ar.actions = store.i32(store.handle(kSampledActions)).data();
  ar.credits = store.i32(store.handle("tag_credits")).data();

  ar.world_hi = cfg.variant == TagVariant::Discrete ? static_cast<float>(cfg.grid_size - 1)
                                                    : static_cast<float>(cfg.world_length);
  ar.inv_world = 1.0f / static_cast<float>(cfg.side_length());
  ar.accel_delta = static_cast<float>(cfg.accel_delta);
  ar.turn_delta = static_cast<float>(cfg.turn_delta);
  ar.tag_radius = static_cast<float>(cfg.tag_radius);
  ar.inv_episode = 1.0f / static_cast<float>(cfg.episode_length);
  ar.reward_per_tag = static_cast<float>(cfg.tag_reward);
  ar.penalty = static_cast<float>(cfg.tagged_penalty);
  ar.max_speed.resize(static_cast<size_t>(ar.A));
  ar.inv_max_speed.resize(static_cast<size_t>(ar.A));
  for (int64_t a = 0; a < ar.A; ++a) {
    const float ms = static_cast<float>(a < cfg.num_taggers ? cfg.max_speed_tagger
                                                            : cfg.max_speed_runner);
    ar.max_speed[static_cast<size_t>(a)] = ms;
    ar.inv_max_speed[static_cast<size_t>(a)] = 1.0f / ms;
  }
  return ar;
}

struct Placement {
  float x = 0.0f, y = 0.0f, dir = 0.0f;
};

Placement place_agent(const TagConfig& cfg, int64_t episode, int64_t env, int64_t agent) {
  const uint64_t stream = substream(cfg.seed, kStreamPlacement);
  const double ux = uniform({stream, episode, env, agent, 0, 0});
  const double uy = uniform({stream, episode, env, agent, 1, 0});
  Placement p;
  if (cfg.variant == TagVariant::Discrete) {
    const auto g = static_cast<double>(cfg.grid_size);
    p.x = static_cast<float>(std::min(cfg.grid_size - 1, static_cast<int64_t>(ux * g)));
    p.y = static_cast<float>(std::min(cfg.grid_size - 1, static_cast<int64_t>(uy * g)));
  } else {
    const double ud = uniform({stream, episode, env, agent, 2, 0});
    p.x = static_cast<float>(ux * cfg.world_length);
    p.y = static_cast<float>(uy * cfg.world_length);
    p.dir = static_cast<float>(ud * 6.283185307179586);
  }
  return p;
}

void apply_move(const Arrays& ar, const TagConfig& cfg, int64_t env, int64_t agent) {
  const int64_t i = env * ar.A + agent;
  if (!ar.active[i]) return;
  if (!ar.continuous) {
    move_discrete(ar.actions[i], ar.loc_x[i], ar.loc_y[i], cfg.grid_size);
  } else {
    const int32_t accel = ar.actions[i * 2];
    const int32_t turn = ar.actions[i * 2 + 1];
    move_continuous(accel, turn, ar.speed[i], ar.direction[i], ar.loc_x[i], ar.loc_y[i],
                    ar.accel_delta, ar.turn_delta, ar.max_speed[static_cast<size_t>(agent)],
                    ar.world_hi);
  }
}

// One observation row. `neighbors` lists the visible agents in their final
// order, or nullptr for "all other agents, ascending id". sin/cos rows are
// per-env precomputed direction terms (continuous only).
void write_obs_row(const Arrays& ar, int64_t env, int64_t agent, const int32_t* neighbors,
                   int64_t n_neighbors, const float* sin_row, const float* cos_row) {
  const int64_t self = env * ar.A + agent;
  float* out = ar.obs + self * ar.obs_dim;
  if (!ar.active[self]) {
    std::fill(out, out + ar.obs_dim, 0.0f);
    return;
  }
  const float sx = ar.loc_x[self];
  const float sy = ar.loc_y[self];
  int64_t written = 0;
  auto emit = [&](int64_t j) {
    const int64_t jj = env * ar.A + j;
    out[0] = (ar.loc_x[jj] - sx) * ar.inv_world;
    out[1] = (ar.loc_y[jj] - sy) * ar.inv_world;
    out[2] = ar.is_tagger[jj] ? 1.0f : 0.0f;
    out[3] = ar.active[jj] ? 1.0f : 0.0f;
    if (ar.continuous) {
      out[4] = ar.speed[jj] * ar.inv_max_speed[static_cast<size_t>(j)];
      out[5] = sin_row[j];
      out[6] = cos_row[j];
      out += 7;
    } else {
      out += 4;
    }
    ++written;
  };
  if (neighbors != nullptr) {
    for (int64_t t = 0; t < n_neighbors; ++t) emit(neighbors[t]);
  } else {
    for (int64_t j = 0; j < ar.A; ++j) {
      if (j != agent) emit(j);
    }
  }
  (void)written;

  out[0] = sx * ar.inv_world;
  out[1] = sy * ar.inv_world;
  if (ar.continuous) {
    out[2] = ar.speed[self] * ar.inv_max_speed[static_cast<size_t>(agent)];
    out[3] = sin_row[agent];
    out[4] = cos_row[agent];
    out += 5;
  } else {
    out += 2;
  }
  out[0] = static_cast<float>(ar.step_count[env]) * ar.inv_episode;
}

void fill_sincos(const Arrays& ar, int64_t env, float* sin_row, float* cos_row) {
  if (!ar.continuous) return;
  const float* d = ar.direction + env * ar.A;
  for (int64_t a = 0; a < ar.A; ++a) {
    sin_row[a] = std::sin(d[a]);
    cos_row[a] = std::cos(d[a]);
  }
}

// Brute-force k-nearest by (squared distance, agent index), nearest first.
// The grid query in the engine path must reproduce this selection exactly.
void select_k_nearest_brute(const float* xs, const float* ys, int64_t n, int64_t self, int64_t k,
                            std::vector<std::pair<float, int32_t>>& scratch, int32_t* out_idx) {
  scratch.clear();
  const float sx = xs[self], sy = ys[self];
  for (int64_t j = 0; j < n; ++j) {
    if (j == self) continue;
    const float dx = xs[j] - sx;
    const float dy = ys[j] - sy;
    scratch.emplace_back(dx * dx + dy * dy, static_cast<int32_t>(j));
  }
  std::sort(scratch.begin(), scratch.end());
  for (int64_t t = 0; t < k; ++t) out_idx[t] = scratch[static_cast<size_t>(t)].second;
}

// Tag resolution for one env given a candidate-tagger visitor; shared rule:
// nearest tagger wins, ties to the lowest tagger index.
void resolve_env_counters(const Arrays& ar, const TagConfig& cfg, int64_t env) {
  ar.step_count[env] += 1;
  int64_t runners_left = 0;
  const int64_t base = env * ar.A;
  for (int64_t a = 0; a < ar.A; ++a) {
    if (!ar.is_tagger[base + a] && ar.active[base + a]) ++runners_left;
  }
  ar.done[env] =
      (ar.step_count[env] >= cfg.episode_length || runners_left == 0) ? uint8_t{1} : uint8_t{0};
}

void write_rewards_row(const Arrays& ar, int64_t env, int64_t agent) {
  const int64_t i = env * ar.A + agent;
  if (ar.is_tagger[i]) {
    ar.rewards[i] = ar.reward_per_tag * static_cast<float>(ar.credits[i]);
  } else {
    ar.rewards[i] = ar.tagged[i] ? ar.penalty : 0.0f;
  }
}

void place_env(const Arrays& ar, const TagConfig& cfg, int64_t env, int64_t episode) {
  const int64_t base = env * ar.A;
  for (int64_t a = 0; a < ar.A; ++a) {
    const Placement p = place_agent(cfg, episode, env, a);
    ar.loc_x[base + a] = p.x;
    ar.loc_y[base + a] = p.y;
    if (ar.continuous) {
      ar.speed[base + a] = 0.0f;
      ar.direction[base + a] = p.dir;
    }
    ar.active[base + a] = 1;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Registration

void register_tag_arrays(DataStore& store, const TagConfig& cfg) {
  cfg.validate();
  const int64_t E = store.num_envs();
  const int64_t A = cfg.num_agents();
  if (store.num_agents() != A) {
    raise(Errc::shape_mismatch, "register_tag_arrays: store num_agents != config agents");
  }

  const size_t n = static_cast<size_t>(E * A);
  std::vector<float> loc_x(n), loc_y(n), speed(n, 0.0f), direction(n);
  std::vector<uint8_t> is_tagger(n), active(n, 1);
  for (int64_t e = 0; e < E; ++e) {
    for (int64_t a = 0; a < A; ++a) {
      const Placement p = place_agent(cfg, 0, e, a);
      loc_x[static_cast<size_t>(e * A + a)] = p.x;
      loc_y[static_cast<size_t>(e * A + a)] = p.y;
      direction[static_cast<size_t>(e * A + a)] = p.dir;
      is_tagger[static_cast<size_t>(e * A + a)] = a < cfg.num_taggers ? 1 : 0;
    }
  }

  const bool continuous = cfg.variant == TagVariant::Continuous;
  auto f32_spec = [&](const char* name, std::vector<int64_t> shape, bool snap) {
    return ArraySpec{name, std::move(shape), ElementKind::Real32, snap};
  };
  store.register_array(f32_spec("loc_x", {E, A}, true), std::span<const float>(loc_x));
  store.register_array(f32_spec("loc_y", {E, A}, true), std::span<const float>(loc_y));
  if (continuous) {
    store.register_array(f32_spec("speed", {E, A}, true), std::span<const float>(speed));
    store.register_array(f32_spec("direction", {E, A}, true), std::span<const float>(direction));
  }
  store.register_array({"is_tagger", {E, A}, ElementKind::Bool8, true},
                       std::span<const uint8_t>(is_tagger));
  store.register_array({"active", {E, A}, ElementKind::Bool8, true},
                       std::span<const uint8_t>(active));
  store.register_array({"step_count", {E}, ElementKind::Int32, false});
  store.register_array({kObservations, {E, A, cfg.obs_dim()}, ElementKind::Real32, false});
  store.register_array(
      {kSampledActions, {E, A, cfg.action_categories()}, ElementKind::Int32, false});
  store.register_array({kRewards, {E, A}, ElementKind::Real32, false});
  store.register_array({kDone, {E}, ElementKind::Bool8, false});
  store.register_array({"tag_credits", {E, A}, ElementKind::Int32, false});
  store.register_array({"was_tagged", {E, A}, ElementKind::Bool8, false});

  // Episode-0 observations, so the very first policy forward sees real state.
  Arrays ar = bind_arrays(store, cfg);
  std::vector<float> sin_row(static_cast<size_t>(A)), cos_row(static_cast<size_t>(A));
  std::vector<std::pair<float, int32_t>> dscratch;
  std::vector<int32_t> nscratch(static_cast<size_t>(std::max<int64_t>(cfg.k_nearest, 1)));
  for (int64_t e = 0; e < E; ++e) {
    fill_sincos(ar, e, sin_row.data(), cos_row.data());
    for (int64_t a = 0; a < A; ++a) {
      if (ar.partial) {
        select_k_nearest_brute(ar.loc_x + e * A, ar.loc_y + e * A, A, a, ar.k, dscratch,
                               nscratch.data());
        write_obs_row(ar, e, a, nscratch.data(), ar.k, sin_row.data(), cos_row.data());
      } else {
        write_obs_row(ar, e, a, nullptr, A - 1, sin_row.data(), cos_row.data());
      }
    }
  }
}

std::vector<std::string> tag_zero_on_reset() {
  return {"step_count", kRewards, kDone, "tag_credits", "was_tagged", kSampledActions,
          kObservations};
}

// ---------------------------------------------------------------------------
// Engine plan

struct TagContext {
  TagConfig cfg;
  Arrays ar;
  struct EnvScratch {
    NeighborGrid grid;
    std::vector<float> sin_dir, cos_dir;
    std::vector<int32_t> knn_idx;
    std::vector<float> knn_d2;
  };
  std::vector<EnvScratch> scratch;
};

TagPlan build_tag_plan(DataStore& store, const TagConfig& cfg) {
  cfg.validate();
  if (!store.locked()) raise(Errc::state_error, "build_tag_plan: store must be locked");

  auto ctx = std::make_shared<TagContext>();
  ctx->cfg = cfg;
  ctx->ar = bind_arrays(store, cfg);
  const int64_t E = store.num_envs();
  const int64_t A = cfg.num_agents();
  ctx->scratch.resize(static_cast<size_t>(E));
  for (auto& sc : ctx->scratch) {
    sc.grid.configure(static_cast<float>(cfg.side_length()), A);
    sc.sin_dir.resize(static_cast<size_t>(A));
    sc.cos_dir.resize(static_cast<size_t>(A));
    sc.knn_idx.resize(static_cast<size_t>(std::max<int64_t>(cfg.k_nearest, 1)));
    sc.knn_d2.resize(static_cast<size_t>(std::max<int64_t>(cfg.k_nearest, 1)));
  }

  TagPlan out;
  out.context = ctx;

  Phase move;
  move.name = "move";
  move.granularity = Granularity::PerAgent;
  move.writes = {{"loc_x", WriteScope::AgentSlice}, {"loc_y", WriteScope::AgentSlice}};
  if (cfg.variant == TagVariant::Continuous) {
    move.writes.push_back({"speed", WriteScope::AgentSlice});
    move.writes.push_back({"direction", WriteScope::AgentSlice});
  }
  move.kernel = [ctx](const KernelArgs& k) { apply_move(ctx->ar, ctx->cfg, k.env_id, k.agent_id); };
  out.plan.phases.push_back(std::move(move));

  Phase resolve;
  resolve.name = "resolve_tags";
  resolve.granularity = Granularity::PerEnv;
  resolve.writes = {{"active", WriteScope::EnvRow},
                    {"tag_credits", WriteScope::EnvRow},
                    {"was_tagged", WriteScope::EnvRow},
                    {"step_count", WriteScope::EnvRow},
                    {kDone, WriteScope::EnvRow}};
  resolve.kernel = [ctx](const KernelArgs& k) {
    const Arrays& ar = ctx->ar;
    const TagConfig& cfg = ctx->cfg;
    const int64_t e = k.env_id;
    const int64_t A = ar.A;
    const int64_t base = e * A;
    auto& sc = ctx->scratch[static_cast<size_t>(e)];

    std::memset(ar.credits + base, 0, static_cast<size_t>(A) * sizeof(int32_t));
    std::memset(ar.tagged + base, 0, static_cast<size_t>(A));
    const float* xs = ar.loc_x + base;
    const float* ys = ar.loc_y + base;
    sc.grid.build(xs, ys, A);
    fill_sincos(ar, e, sc.sin_dir.data(), sc.cos_dir.data());

    const float bias = detail::fault_hooks().tag_radius_bias;
    const bool exact_cell = !ar.continuous && bias == 0.0f;
    const float radius = ar.continuous ? ar.tag_radius + bias : bias;
    const float r2 = radius * radius;

    for (int64_t rn = 0; rn < A; ++rn) {
      if (ar.is_tagger[base + rn] || !ar.active[base + rn]) continue;
      const float rx = xs[rn];
      const float ry = ys[rn];
      int32_t best = -1;
      float best_d2 = 0.0f;
      if (exact_cell) {
        sc.grid.visit_square(rx, ry, 0.0f, [&](int32_t j) {
          if (ar.is_tagger[base + j] && xs[j] == rx && ys[j] == ry && (best < 0 || j < best)) {
            best = j;
          }
        });
      } else {
        // Slightly widened cell query so boundary candidates whose rounded
        // squared distance still compares <= r2 are never skipped.
        sc.grid.visit_square(rx, ry, radius * 1.001f + 1e-6f, [&](int32_t j) {
          if (!ar.is_tagger[base + j]) return;
          const float dx = xs[j] - rx;
          const float dy = ys[j] - ry;
          const float d2 = dx * dx + dy * dy;
          if (d2 <= r2 && (best < 0 || d2 < best_d2 || (d2 == best_d2 && j < best))) {
            best = j;
            best_d2 = d2;
          }
        });
      }
      if (best >= 0) {
        ar.active[base + rn] = 0;
        ar.tagged[base + rn] = 1;
        ar.credits[base + best] += 1;
      }
    }
    resolve_env_counters(ar, cfg, e);
  };
  out.plan.phases.push_back(std::move(resolve));

  Phase observe;
  observe.name = "observe_reward";
  observe.granularity = Granularity::PerAgent;
  observe.writes = {{kObservations, WriteScope::AgentSlice}, {kRewards, WriteScope::AgentSlice}};
  observe.kernel = [ctx](const KernelArgs& k) {
    const Arrays& ar = ctx->ar;
    const int64_t e = k.env_id;
    const int64_t a = k.agent_id;
    auto& sc = ctx->scratch[static_cast<size_t>(e)];
    write_rewards_row(ar, e, a);
    if (ar.partial && ar.active[e * ar.A + a]) {
      sc.grid.k_nearest(ar.loc_x + e * ar.A, ar.loc_y + e * ar.A, a, ar.k, sc.knn_idx.data(),
                        sc.knn_d2.data());
      write_obs_row(ar, e, a, sc.knn_idx.data(), ar.k, sc.sin_dir.data(), sc.cos_dir.data());
    } else {
      write_obs_row(ar, e, a, nullptr, ar.A - 1, sc.sin_dir.data(), sc.cos_dir.data());
    }
  };
  out.plan.phases.push_back(std::move(observe));

  return out;
}

std::function<void(DataStore&, int64_t, int64_t)> make_tag_reinit(const TagPlan& plan) {
  auto ctx = plan.context;
  return [ctx](DataStore&, int64_t env, int64_t episode) {
    const Arrays& ar = ctx->ar;
    place_env(ar, ctx->cfg, env, episode);
    auto& sc = ctx->scratch[static_cast<size_t>(env)];
    sc.grid.build(ar.loc_x + env * ar.A, ar.loc_y + env * ar.A, ar.A);
    fill_sincos(ar, env, sc.sin_dir.data(), sc.cos_dir.data());
    for (int64_t a = 0; a < ar.A; ++a) {
      if (ar.partial) {
        sc.grid.k_nearest(ar.loc_x + env * ar.A, ar.loc_y + env * ar.A, a, ar.k,
                          sc.knn_idx.data(), sc.knn_d2.data());
        write_obs_row(ar, env, a, sc.knn_idx.data(), ar.k, sc.sin_dir.data(), sc.cos_dir.data());
      } else {
        write_obs_row(ar, env, a, nullptr, ar.A - 1, sc.sin_dir.data(), sc.cos_dir.data());
      }
    }
  };
}

// ---------------------------------------------------------------------------
// Sequential reference

TagReference::TagReference(DataStore& store, const TagConfig& cfg) : store_(store), cfg_(cfg) {
  cfg.validate();
  if (!store.locked()) raise(Errc::state_error, "TagReference: store must be locked");
  const size_t A = static_cast<size_t>(cfg.num_agents());
  sin_dir_.resize(A);
  cos_dir_.resize(A);
  neighbor_scratch_.resize(static_cast<size_t>(std::max<int64_t>(cfg.k_nearest, 1)));
}

void TagReference::observe_env(int64_t e) {
  Arrays ar = bind_arrays(store_, cfg_);
  const int64_t A = ar.A;
  fill_sincos(ar, e, sin_dir_.data(), cos_dir_.data());
  for (int64_t a = 0; a < A; ++a) {
    write_rewards_row(ar, e, a);
    if (ar.partial && ar.active[e * A + a]) {
      select_k_nearest_brute(ar.loc_x + e * A, ar.loc_y + e * A, A, a, ar.k, dist_scratch_,
                             neighbor_scratch_.data());
      write_obs_row(ar, e, a, neighbor_scratch_.data(), ar.k, sin_dir_.data(), cos_dir_.data());
    } else {
      write_obs_row(ar, e, a, nullptr, A - 1, sin_dir_.data(), cos_dir_.data());
    }
  }
}

void TagReference::step(int64_t) {
  Arrays ar = bind_arrays(store_, cfg_);
  const int64_t E = store_.num_envs();
  const int64_t A = ar.A;

  for (int64_t e = 0; e < E; ++e) {
    for (int64_t a = 0; a < A; ++a) apply_move(ar, cfg_, e, a);
  }

  for (int64_t e = 0; e < E; ++e) {
    const int64_t base = e * A;
    std::memset(ar.credits + base, 0, static_cast<size_t>(A) * sizeof(int32_t));
    std::memset(ar.tagged + base, 0, static_cast<size_t>(A));
    const float* xs = ar.loc_x + base;
    const float* ys = ar.loc_y + base;
    const float r2 = ar.tag_radius * ar.tag_radius;
    for (int64_t rn = 0; rn < A; ++rn) {
      if (ar.is_tagger[base + rn] || !ar.active[base + rn]) continue;
      int32_t best = -1;
      float best_d2 = 0.0f;
      for (int64_t tg = 0; tg < A; ++tg) {
        if (!ar.is_tagger[base + tg]) continue;
        if (!ar.continuous) {
          if (xs[tg] == xs[rn] && ys[tg] == ys[rn] && (best < 0 || tg < best)) {
            best = static_cast<int32_t>(tg);
          }
        } else {
          const float dx = xs[tg] - xs[rn];
          const float dy = ys[tg] - ys[rn];
          const float d2 = dx * dx + dy * dy;
          if (d2 <= r2 &&
              (best < 0 || d2 < best_d2 || (d2 == best_d2 && static_cast<int32_t>(tg) < best))) {
            best = static_cast<int32_t>(tg);
            best_d2 = d2;
          }
        }
      }
      if (best >= 0) {
        ar.active[base + rn] = 0;
        ar.tagged[base + rn] = 1;
        ar.credits[base + best] += 1;
      }
    }
    resolve_env_counters(ar, cfg_, e);
  }

  for (int64_t e = 0; e < E; ++e) observe_env(e);
}

void TagReference::reinit_env(int64_t env, int64_t episode) {
  Arrays ar = bind_arrays(store_, cfg_);
  place_env(ar, cfg_, env, episode);
  // Rewards recomputed below are all zero again (credits/tags were zeroed by
  // the reset), so reusing the observe pass keeps one code path.
  const int64_t A = ar.A;
  fill_sincos(ar, env, sin_dir_.data(), cos_dir_.data());
  for (int64_t a = 0; a < A; ++a) {
    if (ar.partial) {
      select_k_nearest_brute(ar.loc_x + env * A, ar.loc_y + env * A, A, a, ar.k, dist_scratch_,
                             neighbor_scratch_.data());
      write_obs_row(ar, env, a, neighbor_scratch_.data(), ar.k, sin_dir_.data(), cos_dir_.data());
    } else {
      write_obs_row(ar, env, a, nullptr, A - 1, sin_dir_.data(), cos_dir_.data());
    }
  }
}

}  // namespace warp
