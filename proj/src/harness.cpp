#include "warp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "warp/parallel.hpp"
#include "warp/sampler.hpp"

namespace warp {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Config parsing

class StrictObj {
 public:
  StrictObj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) raise(Errc::parse_error, path_ + ": expected a JSON object");
  }

  template <class T>
  void opt(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      raise(Errc::parse_error, path_ + "." + key + ": " + e.what());
    }
  }

  const json* section(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        raise(Errc::parse_error, path_ + ": unknown key \"" + it.key() + "\"");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

TagVariant variant_from_string(const std::string& s) {
  if (s == "discrete") return TagVariant::Discrete;
  if (s == "continuous") return TagVariant::Continuous;
  raise(Errc::parse_error, "env.variant must be \"discrete\" or \"continuous\", got \"" + s + "\"");
}

ObsMode obs_mode_from_string(const std::string& s) {
  if (s == "full") return ObsMode::Full;
  if (s == "partial") return ObsMode::Partial;
  raise(Errc::parse_error, "obs_mode must be \"full\" or \"partial\", got \"" + s + "\"");
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "a2c") return Algorithm::A2C;
  if (s == "ppo") return Algorithm::PPO;
  raise(Errc::parse_error, "trainer.algorithm must be \"a2c\" or \"ppo\", got \"" + s + "\"");
}

const char* to_string(TagVariant v) {
  return v == TagVariant::Discrete ? "discrete" : "continuous";
}
const char* to_string(ObsMode m) { return m == ObsMode::Full ? "full" : "partial"; }
const char* to_string(Algorithm a) { return a == Algorithm::A2C ? "a2c" : "ppo"; }

void parse_env(const json& j, TagConfig& env) {
  StrictObj o(j, "env");
  std::string variant = to_string(env.variant), obs_mode = to_string(env.obs_mode);
  o.opt("variant", variant);
  o.opt("obs_mode", obs_mode);
  env.variant = variant_from_string(variant);
  env.obs_mode = obs_mode_from_string(obs_mode);
  o.opt("grid_size", env.grid_size);
  o.opt("world_length", env.world_length);
  o.opt("num_taggers", env.num_taggers);
  o.opt("num_runners", env.num_runners);
  o.opt("episode_length", env.episode_length);
  o.opt("tag_radius", env.tag_radius);
  o.opt("k_nearest", env.k_nearest);
  o.opt("tag_reward", env.tag_reward);
  o.opt("tagged_penalty", env.tagged_penalty);
  o.opt("max_speed_tagger", env.max_speed_tagger);
  o.opt("max_speed_runner", env.max_speed_runner);
  o.opt("accel_delta", env.accel_delta);
  o.opt("turn_delta", env.turn_delta);
  o.opt("seed", env.seed);
  o.finish();
}

void parse_engine(const json& j, EngineConfig& engine) {
  StrictObj o(j, "engine");
  o.opt("num_envs", engine.num_envs);
  o.opt("worker_count", engine.worker_count);
  o.opt("deterministic", engine.deterministic);
  o.finish();
}

void parse_trainer(const json& j, TrainerConfig& trainer) {
  StrictObj o(j, "trainer");
  std::string algorithm = to_string(trainer.algorithm);
  o.opt("algorithm", algorithm);
  trainer.algorithm = algorithm_from_string(algorithm);
  o.opt("gamma", trainer.gamma);
  o.opt("rollout_horizon", trainer.rollout_horizon);
  o.opt("learning_rate", trainer.learning_rate);
  o.opt("value_coef", trainer.value_coef);
  o.opt("entropy_coef", trainer.entropy_coef);
  o.opt("ppo_clip", trainer.ppo_clip);
  o.opt("ppo_epochs", trainer.ppo_epochs);
  o.opt("max_grad_norm", trainer.max_grad_norm);
  o.opt("iterations", trainer.iterations);
  o.opt("seed", trainer.seed);
  o.opt("hidden_sizes", trainer.hidden_sizes);
  o.opt("checkpoint_every", trainer.checkpoint_every);
  o.finish();
}

void parse_run(const json& j, RunSettings& run) {
  StrictObj o(j, "run");
  o.opt("mode", run.mode);
  o.opt("output_dir", run.output_dir);
  o.opt("check_steps", run.check_steps);
  o.opt("env_counts", run.env_counts);
  o.opt("agent_counts", run.agent_counts);
  o.opt("bench_obs_modes", run.bench_obs_modes);
  o.opt("bench_budget_ms", run.bench_budget_ms);
  o.opt("bench_reps", run.bench_reps);
  o.opt("dump_trajectory", run.dump_trajectory);
  o.opt("dump_arrays", run.dump_arrays);
  o.opt("resume_from", run.resume_from);
  o.finish();
}

json config_to_json(const RunConfig& c) {
  json j;
  j["env"] = {{"variant", to_string(c.env.variant)},
              {"grid_size", c.env.grid_size},
              {"world_length", c.env.world_length},
              {"num_taggers", c.env.num_taggers},
              {"num_runners", c.env.num_runners},
              {"episode_length", c.env.episode_length},
              {"tag_radius", c.env.tag_radius},
              {"obs_mode", to_string(c.env.obs_mode)},
              {"k_nearest", c.env.k_nearest},
              {"tag_reward", c.env.tag_reward},
              {"tagged_penalty", c.env.tagged_penalty},
              {"max_speed_tagger", c.env.max_speed_tagger},
              {"max_speed_runner", c.env.max_speed_runner},
              {"accel_delta", c.env.accel_delta},
              {"turn_delta", c.env.turn_delta},
              {"seed", c.env.seed}};
  j["engine"] = {{"num_envs", c.engine.num_envs},
                 {"worker_count", c.engine.worker_count},
                 {"deterministic", c.engine.deterministic}};
  j["trainer"] = {{"algorithm", to_string(c.trainer.algorithm)},
                  {"gamma", c.trainer.gamma},
                  {"rollout_horizon", c.trainer.rollout_horizon},
                  {"learning_rate", c.trainer.learning_rate},
                  {"value_coef", c.trainer.value_coef},
                  {"entropy_coef", c.trainer.entropy_coef},
                  {"ppo_clip", c.trainer.ppo_clip},
                  {"ppo_epochs", c.trainer.ppo_epochs},
                  {"max_grad_norm", c.trainer.max_grad_norm},
                  {"iterations", c.trainer.iterations},
                  {"seed", c.trainer.seed},
                  {"hidden_sizes", c.trainer.hidden_sizes},
                  {"checkpoint_every", c.trainer.checkpoint_every}};
  j["run"] = {{"mode", c.run.mode},
              {"output_dir", c.run.output_dir},
              {"check_steps", c.run.check_steps},
              {"env_counts", c.run.env_counts},
              {"agent_counts", c.run.agent_counts},
              {"bench_obs_modes", c.run.bench_obs_modes},
              {"bench_budget_ms", c.run.bench_budget_ms},
              {"bench_reps", c.run.bench_reps},
              {"dump_trajectory", c.run.dump_trajectory},
              {"dump_arrays", c.run.dump_arrays},
              {"resume_from", c.run.resume_from}};
  return j;
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

int hardware_cores() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

int resolve_workers(const EngineConfig& cfg) {
  return cfg.worker_count <= 0 ? hardware_cores() : cfg.worker_count;
}

ReportMeta make_meta(const RunConfig& config, const std::string& mode) {
  ReportMeta m;
  m.mode = mode;
  m.version = kVersion;
  m.config_hash = config.config_hash();
  m.env_seed = config.env.seed;
  m.trainer_seed = config.trainer.seed;
  m.cores = hardware_cores();
  m.workers = resolve_workers(config.engine);
  return m;
}

void meta_into_table(const ReportMeta& m, Table& t) {
  t.meta["mode"] = m.mode;
  t.meta["version"] = m.version;
  t.meta["config_hash"] = m.config_hash;
  t.meta["env_seed"] = std::to_string(m.env_seed);
  t.meta["trainer_seed"] = std::to_string(m.trainer_seed);
  t.meta["cores"] = std::to_string(m.cores);
  t.meta["workers"] = std::to_string(m.workers);
}

json meta_to_json(const ReportMeta& m) {
  return {{"mode", m.mode},         {"version", m.version}, {"config_hash", m.config_hash},
          {"env_seed", m.env_seed}, {"trainer_seed", m.trainer_seed},
          {"cores", m.cores},       {"workers", m.workers}};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) raise(Errc::io_error, "cannot open for writing: " + path);
  os << text;
  if (!os) raise(Errc::io_error, "write failed: " + path);
}

void ensure_output_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) raise(Errc::io_error, "cannot create output dir " + dir + ": " + ec.message());
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    raise(Errc::parse_error, std::string("config: ") + e.what());
  }
  RunConfig c;
  StrictObj root(j, "config");
  if (const json* env = root.section("env")) parse_env(*env, c.env);
  if (const json* engine = root.section("engine")) parse_engine(*engine, c.engine);
  if (const json* trainer = root.section("trainer")) parse_trainer(*trainer, c.trainer);
  if (const json* run = root.section("run")) parse_run(*run, c.run);
  root.finish();
  c.engine.num_agents = c.env.num_agents();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) raise(Errc::io_error, "cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_string(ss.str());
}

std::string RunConfig::to_json_string() const { return config_to_json(*this).dump(2); }

std::string RunConfig::config_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(*this).dump())));
  return buf;
}

void RunConfig::validate() const {
  env.validate();
  trainer.validate();
  if (engine.num_envs < 1) raise(Errc::invalid_config, "engine.num_envs must be >= 1");
  if (run.check_steps < 1) raise(Errc::invalid_config, "run.check_steps must be >= 1");
  if (run.bench_reps < 1) raise(Errc::invalid_config, "run.bench_reps must be >= 1");
  for (int64_t c : run.env_counts) {
    if (c < 1) raise(Errc::invalid_config, "run.env_counts entries must be >= 1");
  }
  for (const std::string& m : run.bench_obs_modes) obs_mode_from_string(m);
}

// ---------------------------------------------------------------------------
// Table / CSV

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void Table::write_csv(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) raise(Errc::io_error, "cannot open for writing: " + path);
  for (const auto& [k, v] : meta) os << "# " << k << "=" << v << "\n";
  for (size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
  os << "\n";
  for (const auto& row : rows) {
    if (row.size() != columns.size()) raise(Errc::io_error, "table row width mismatch");
    for (size_t i = 0; i < row.size(); ++i) {
      if (row[i].find_first_of(",\n") != std::string::npos) {
        raise(Errc::io_error, "table cell contains a separator");
      }
      os << (i ? "," : "") << row[i];
    }
    os << "\n";
  }
  if (!os) raise(Errc::io_error, "write failed: " + path);
}

Table Table::read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) raise(Errc::io_error, "cannot open: " + path);
  Table t;
  std::string line;
  bool header_done = false;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    size_t start = 0;
    for (;;) {
      const size_t pos = s.find(',', start);
      if (pos == std::string::npos) {
        out.push_back(s.substr(start));
        return out;
      }
      out.push_back(s.substr(start, pos - start));
      start = pos + 1;
    }
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string kv = line.substr(1);
      if (!kv.empty() && kv[0] == ' ') kv.erase(0, 1);
      const size_t eq = kv.find('=');
      if (eq != std::string::npos) t.meta[kv.substr(0, eq)] = kv.substr(eq + 1);
      continue;
    }
    if (!header_done) {
      t.columns = split(line);
      header_done = true;
    } else {
      t.rows.push_back(split(line));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Workspace and shared rollout helpers

PolicyMap tag_policy_map(const TagConfig& cfg) {
  PolicyMap map;
  for (int64_t a = 0; a < cfg.num_taggers; ++a) map["tagger"].push_back(a);
  for (int64_t a = cfg.num_taggers; a < cfg.num_agents(); ++a) map["runner"].push_back(a);
  return map;
}

Workspace build_workspace(const TagConfig& env_cfg, const EngineConfig& engine_cfg) {
  env_cfg.validate();
  Workspace ws;
  ws.env_cfg = env_cfg;
  ws.engine_cfg = engine_cfg;
  ws.engine_cfg.num_agents = env_cfg.num_agents();
  ws.store = std::make_unique<DataStore>(ws.engine_cfg.num_envs, ws.engine_cfg.num_agents);
  register_tag_arrays(*ws.store, env_cfg);
  ws.store->lock();
  ws.plan = build_tag_plan(*ws.store, env_cfg);
  const std::vector<Diagnostic> diags = StepEngine::validate(ws.plan.plan, ws.store.get());
  if (!diags.empty()) {
    raise(Errc::state_error, "tag plan failed validation: " + diags.front().message);
  }
  ws.engine = std::make_unique<StepEngine>(ws.engine_cfg);
  ResetPolicy policy;
  policy.auto_reset = true;
  policy.zero_on_reset = tag_zero_on_reset();
  policy.reinitialize = make_tag_reinit(ws.plan);
  ws.resets = std::make_unique<ResetManager>(*ws.store, policy);
  return ws;
}

namespace {

// Shared stepping loop: forward (or zero logits), sample, step, track, reset.
class RolloutDriver {
 public:
  RolloutDriver(Workspace& ws, const PolicyMap* map,
                const std::map<std::string, const PolicyParams*>* policies, uint64_t sample_seed)
      : ws_(ws), policies_(policies), sample_seed_(sample_seed) {
    const DataStore& store = *ws.store;
    E_ = store.num_envs();
    A_ = store.num_agents();
    D_ = store.info(store.handle(kObservations)).agent_stride;
    C_ = ws.env_cfg.action_categories();
    V_ = ws.env_cfg.action_choices();
    logits_.assign(static_cast<size_t>(E_ * A_ * C_ * V_), 0.0);
    values_.assign(static_cast<size_t>(E_ * A_), 0.0);
    if (policies_ != nullptr && map != nullptr) {
      for (const auto& [tag, agents] : *map) groups_.emplace_back(tag, agents);
    }
  }

  void forward_policies() {
    if (policies_ == nullptr) return;  // uniform random: keep zero logits
    const DataStore& store = *ws_.store;
    std::span<const float> obs = store.f32(store.handle(kObservations));
    for (const auto& [tag, agents] : groups_) {
      const PolicyParams* params = policies_->at(tag);
      const int64_t rows = E_ * static_cast<int64_t>(agents.size());
      x_.resize(static_cast<size_t>(rows * D_));
      logits_tag_.resize(static_cast<size_t>(rows * C_ * V_));
      values_tag_.resize(static_cast<size_t>(rows));
      int64_t r = 0;
      for (int64_t e = 0; e < E_; ++e) {
        for (int64_t a : agents) {
          const float* src = obs.data() + (e * A_ + a) * D_;
          for (int64_t d = 0; d < D_; ++d) x_[static_cast<size_t>(r * D_ + d)] = src[d];
          ++r;
        }
      }
      forward_parallel(*params, x_, rows, ws_.engine->worker_count(), logits_tag_, values_tag_);
      r = 0;
      for (int64_t e = 0; e < E_; ++e) {
        for (int64_t a : agents) {
          std::memcpy(logits_.data() + (e * A_ + a) * C_ * V_, logits_tag_.data() + r * C_ * V_,
                      static_cast<size_t>(C_ * V_) * sizeof(double));
          ++r;
        }
      }
    }
  }

  void set_auto_reset(bool enabled) { auto_reset_ = enabled; }

  void step(EpisodeTracker* tracker) {
    forward_policies();
    sample_actions(*ws_.store, logits_, C_, V_, t_++, sample_seed_);
    ws_.engine->run_step(ws_.plan.plan, *ws_.store, t_ - 1);
    if (tracker) {
      tracker->accumulate(*ws_.store);
      tracker->finish_done(*ws_.store);
    }
    if (auto_reset_) {
      const std::vector<int64_t> ids = ws_.resets->detect_done(*ws_.store);
      ws_.resets->auto_reset(*ws_.store, ids);
    }
  }

  void run(int64_t steps, EpisodeTracker* tracker) {
    for (int64_t i = 0; i < steps; ++i) step(tracker);
  }

 private:
  Workspace& ws_;
  const std::map<std::string, const PolicyParams*>* policies_;
  std::vector<std::pair<std::string, std::vector<int64_t>>> groups_;
  uint64_t sample_seed_;
  bool auto_reset_ = true;
  int64_t t_ = 0;
  int64_t E_ = 0, A_ = 0, D_ = 0, C_ = 0, V_ = 0;
  std::vector<double> logits_, values_, x_, logits_tag_, values_tag_;
};

}  // namespace

std::map<std::string, double> evaluate_policies(
    Workspace& ws, const PolicyMap& map,
    const std::map<std::string, const PolicyParams*>* policies, int64_t steps, uint64_t seed) {
  EpisodeTracker tracker(*ws.store, map);
  RolloutDriver driver(ws, &map, policies, seed);
  driver.run(steps, &tracker);
  std::map<std::string, double> out;
  for (const auto& [tag, sums] : tracker.completed()) {
    double mean = std::numeric_limits<double>::quiet_NaN();
    if (!sums.empty()) {
      mean = 0.0;
      for (double s : sums) mean += s;
      mean /= static_cast<double>(sums.size());
    }
    out[tag] = mean;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Consistency checking

namespace {

std::optional<Divergence> compare_stores(const DataStore& a, const DataStore& b, int64_t step) {
  // Causal order of the workflow: actions were sampled first, then rewards
  // and done came out of the step, then the next observations.
  static const char* kOrder[] = {kSampledActions, kRewards, kDone, kObservations};
  for (const char* name : kOrder) {
    const ArrayHandle ha = a.handle(name);
    const ArrayHandle hb = b.handle(name);
    const ArrayInfo& info = a.info(ha);
    const int64_t elem = element_size(info.spec.kind);
    for (int64_t e = 0; e < a.num_envs(); ++e) {
      const auto row_a = a.env_row_bytes(ha, e);
      const auto row_b = b.env_row_bytes(hb, e);
      if (std::memcmp(row_a.data(), row_b.data(), row_a.size()) == 0) continue;
      int64_t first = 0;
      while (row_a[static_cast<size_t>(first)] == row_b[static_cast<size_t>(first)]) ++first;
      const int64_t flat = first / elem;
      Divergence d;
      d.step = step;
      d.array = name;
      d.env = e;
      d.agent = info.has_agent_axis ? flat / info.agent_stride : -1;
      d.index = info.has_agent_axis ? flat % info.agent_stride : flat;
      return d;
    }
  }
  return std::nullopt;
}

}  // namespace

CheckCombo check_consistency_single(const RunConfig& config, TagVariant variant, ObsMode obs_mode,
                                    int workers) {
  TagConfig env = config.env;
  env.variant = variant;
  env.obs_mode = obs_mode;
  env.validate();

  EngineConfig ecfg = config.engine;
  ecfg.worker_count = workers;
  Workspace ws = build_workspace(env, ecfg);

  auto ref_store = std::make_unique<DataStore>(ecfg.num_envs, env.num_agents());
  register_tag_arrays(*ref_store, env);
  ref_store->lock();
  TagReference reference(*ref_store, env);
  ResetPolicy ref_policy;
  ref_policy.auto_reset = true;
  ref_policy.zero_on_reset = tag_zero_on_reset();
  ref_policy.reinitialize = [&reference](DataStore&, int64_t e, int64_t episode) {
    reference.reinit_env(e, episode);
  };
  ResetManager ref_resets(*ref_store, ref_policy);

  PolicyDims dims;
  dims.obs_dim = env.obs_dim();
  dims.hidden = config.trainer.hidden_sizes;
  dims.num_categories = env.action_categories();
  dims.num_choices = env.action_choices();
  const PolicyParams policy = init_policy(config.trainer.seed, dims);

  const int64_t E = ecfg.num_envs;
  const int64_t A = env.num_agents();
  const int64_t D = env.obs_dim();
  const int64_t W = dims.logits_width();
  std::vector<double> x(static_cast<size_t>(E * A * D));
  std::vector<double> logits(static_cast<size_t>(E * A * W));
  std::vector<double> values(static_cast<size_t>(E * A));
  const int fwd_workers = ws.engine->worker_count();
  auto forward_and_sample = [&](DataStore& store, int64_t t) {
    std::span<const float> obs = store.f32(store.handle(kObservations));
    for (size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(obs[i]);
    forward_parallel(policy, x, E * A, fwd_workers, logits, values);
    sample_actions(store, logits, dims.num_categories, dims.num_choices, t, config.trainer.seed);
  };

  CheckCombo combo;
  combo.variant = to_string(variant);
  combo.obs_mode = to_string(obs_mode);
  combo.workers = ws.engine->worker_count();
  combo.steps = config.run.check_steps;

  const auto t0 = Clock::now();
  combo.passed = true;
  for (int64_t t = 0; t < config.run.check_steps; ++t) {
    forward_and_sample(*ws.store, t);
    forward_and_sample(*ref_store, t);
    ws.engine->run_step(ws.plan.plan, *ws.store, t);
    reference.step(t);
    if (auto d = compare_stores(*ws.store, *ref_store, t)) {
      combo.passed = false;
      combo.divergence = *d;
      break;
    }
    const std::vector<int64_t> ids_a = ws.resets->detect_done(*ws.store);
    ws.resets->auto_reset(*ws.store, ids_a);
    const std::vector<int64_t> ids_b = ref_resets.detect_done(*ref_store);
    ref_resets.auto_reset(*ref_store, ids_b);
  }
  combo.wall_ms = seconds_since(t0) * 1e3;
  return combo;
}

CheckReport check_consistency(const RunConfig& config) {
  config.validate();
  CheckReport report;
  report.meta = make_meta(config, "check");

  std::vector<int> workers;
  for (int w : {1, 2, hardware_cores()}) {
    if (std::find(workers.begin(), workers.end(), w) == workers.end()) workers.push_back(w);
  }

  for (TagVariant variant : {TagVariant::Discrete, TagVariant::Continuous}) {
    for (ObsMode obs_mode : {ObsMode::Full, ObsMode::Partial}) {
      for (int w : workers) {
        report.combos.push_back(check_consistency_single(config, variant, obs_mode, w));
      }
    }
  }
  report.passed = std::all_of(report.combos.begin(), report.combos.end(),
                              [](const CheckCombo& c) { return c.passed; });
  return report;
}

Table CheckReport::table() const {
  Table t;
  meta_into_table(meta, t);
  t.columns = {"variant", "obs_mode", "workers",  "steps",    "passed",
               "div_step", "div_array", "div_env", "div_agent", "div_index"};
  for (const CheckCombo& c : combos) {
    const Divergence d = c.divergence.value_or(Divergence{});
    t.rows.push_back({c.variant, c.obs_mode, std::to_string(c.workers), std::to_string(c.steps),
                      c.passed ? "1" : "0", std::to_string(d.step), c.divergence ? d.array : "",
                      std::to_string(d.env), std::to_string(d.agent), std::to_string(d.index)});
  }
  return t;
}

std::string CheckReport::to_json_string() const {
  json j;
  j["meta"] = meta_to_json(meta);
  j["passed"] = passed;
  j["combos"] = json::array();
  for (const CheckCombo& c : combos) {
    json jc = {{"variant", c.variant}, {"obs_mode", c.obs_mode}, {"workers", c.workers},
               {"steps", c.steps},     {"passed", c.passed},     {"wall_ms", c.wall_ms}};
    if (c.divergence) {
      jc["divergence"] = {{"step", c.divergence->step},   {"array", c.divergence->array},
                          {"env", c.divergence->env},     {"agent", c.divergence->agent},
                          {"index", c.divergence->index}};
    }
    j["combos"].push_back(jc);
  }
  return j.dump(2);
}

std::string CheckReport::summary() const {
  std::ostringstream os;
  int n_pass = 0;
  for (const CheckCombo& c : combos) n_pass += c.passed ? 1 : 0;
  os << "check: " << (passed ? "PASS" : "FAIL") << " (" << n_pass << "/" << combos.size()
     << " combos)\n";
  for (const CheckCombo& c : combos) {
    os << "  " << c.variant << "/" << c.obs_mode << " workers=" << c.workers << " steps=" << c.steps
       << " " << (c.passed ? "pass" : "FAIL");
    if (c.divergence) {
      os << " first divergence: step=" << c.divergence->step << " array=" << c.divergence->array
         << " env=" << c.divergence->env << " agent=" << c.divergence->agent
         << " index=" << c.divergence->index;
    }
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Benchmarks

namespace {

// Rollout throughput in env-steps/sec: calibrates a batch size against the
// wall budget, warm-up included, then reports the median over bench_reps.
double measure_rollout_sps(Workspace& ws, const RunConfig& config) {
  RolloutDriver driver(ws, nullptr, nullptr, config.env.seed);
  const double budget_s = std::max(config.run.bench_budget_ms, 50.0) / 1e3;
  const double target_rep_s = budget_s / static_cast<double>(config.run.bench_reps + 1);

  int64_t n = 8;
  double elapsed = 0.0;
  for (;;) {
    const auto t0 = Clock::now();
    driver.run(n, nullptr);
    elapsed = seconds_since(t0);
    if (elapsed >= target_rep_s / 4 || n >= (int64_t{1} << 22)) break;
    n *= 2;
  }
  if (elapsed < target_rep_s / 2) {
    n = std::max<int64_t>(n, static_cast<int64_t>(static_cast<double>(n) * target_rep_s /
                                                  std::max(elapsed, 1e-9)));
  }
  std::vector<double> sps;
  for (int64_t rep = 0; rep < config.run.bench_reps; ++rep) {
    const auto t0 = Clock::now();
    driver.run(n, nullptr);
    const double s = seconds_since(t0);
    sps.push_back(static_cast<double>(ws.store->num_envs() * n) / s);
  }
  return median(sps);
}

}  // namespace

BenchEnvsReport bench_envs(const RunConfig& config) {
  config.validate();
  BenchEnvsReport report;
  report.meta = make_meta(config, "bench-envs");
  for (int64_t count : config.run.env_counts) {
    BenchEnvsRow row;
    row.env_count = count;
    EngineConfig ecfg = config.engine;
    ecfg.num_envs = count;
    {
      Workspace ws = build_workspace(config.env, ecfg);
      row.steps_per_sec = measure_rollout_sps(ws, config);
    }
    {
      // End-to-end: rollout + training, one iteration per repetition.
      Workspace ws = build_workspace(config.env, ecfg);
      TrainerConfig tcfg = config.trainer;
      tcfg.iterations = 1;
      Trainer trainer(*ws.engine, *ws.store, ws.plan.plan, *ws.resets, tcfg,
                      tag_policy_map(config.env), config.env.action_choices());
      trainer.train();  // warm-up
      std::vector<double> ips;
      for (int64_t rep = 0; rep < config.run.bench_reps; ++rep) {
        const auto t0 = Clock::now();
        trainer.train();
        ips.push_back(1.0 / seconds_since(t0));
      }
      row.iterations_per_sec = median(ips);
    }
    report.rows.push_back(row);
  }
  return report;
}

Table BenchEnvsReport::table() const {
  Table t;
  meta_into_table(meta, t);
  t.columns = {"env_count", "steps_per_sec", "iterations_per_sec"};
  for (const BenchEnvsRow& r : rows) {
    t.rows.push_back({std::to_string(r.env_count), format_double(r.steps_per_sec),
                      format_double(r.iterations_per_sec)});
  }
  return t;
}

std::string BenchEnvsReport::to_json_string() const {
  json j;
  j["meta"] = meta_to_json(meta);
  j["rows"] = json::array();
  for (const BenchEnvsRow& r : rows) {
    j["rows"].push_back({{"env_count", r.env_count},
                         {"steps_per_sec", r.steps_per_sec},
                         {"iterations_per_sec", r.iterations_per_sec}});
  }
  return j.dump(2);
}

std::string BenchEnvsReport::summary() const {
  std::ostringstream os;
  os << "bench-envs: " << rows.size() << " env counts (cores=" << meta.cores
     << ", workers=" << meta.workers << ")\n";
  for (const BenchEnvsRow& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  envs=%-6lld steps/s=%-12.0f iters/s=%.2f\n",
                  static_cast<long long>(r.env_count), r.steps_per_sec, r.iterations_per_sec);
    os << buf;
  }
  return os.str();
}

BenchAgentsReport bench_agents(const RunConfig& config) {
  config.validate();
  for (int64_t c : config.run.agent_counts) {
    if (c < 2) raise(Errc::invalid_config, "run.agent_counts entries must be >= 2");
  }
  BenchAgentsReport report;
  report.meta = make_meta(config, "bench-agents");

  const double tagger_frac = static_cast<double>(config.env.num_taggers) /
                             static_cast<double>(config.env.num_agents());
  for (const std::string& mode : config.run.bench_obs_modes) {
    for (int64_t n : config.run.agent_counts) {
      TagConfig env = config.env;
      env.obs_mode = obs_mode_from_string(mode);
      env.num_taggers = std::clamp<int64_t>(
          static_cast<int64_t>(std::llround(tagger_frac * static_cast<double>(n))), 1, n - 1);
      env.num_runners = n - env.num_taggers;
      env.k_nearest = std::min<int64_t>(config.env.k_nearest, n - 1);
      Workspace ws = build_workspace(env, config.engine);
      const double sps = measure_rollout_sps(ws, config);
      BenchAgentsRow row;
      row.obs_mode = mode;
      row.agent_count = n;
      row.per_env_step_us = 1e6 * static_cast<double>(config.engine.num_envs) / sps;
      report.rows.push_back(row);
    }
    // log-log least squares of step time vs agent count
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int64_t m = 0;
    for (const BenchAgentsRow& r : report.rows) {
      if (r.obs_mode != mode) continue;
      const double lx = std::log(static_cast<double>(r.agent_count));
      const double ly = std::log(r.per_env_step_us);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++m;
    }
    report.slopes[mode] =
        (static_cast<double>(m) * sxy - sx * sy) / (static_cast<double>(m) * sxx - sx * sx);
  }
  return report;
}

Table BenchAgentsReport::table() const {
  Table t;
  meta_into_table(meta, t);
  for (const auto& [mode, slope] : slopes) t.meta["slope_" + mode] = format_double(slope);
  t.columns = {"obs_mode", "agent_count", "per_env_step_us"};
  for (const BenchAgentsRow& r : rows) {
    t.rows.push_back(
        {r.obs_mode, std::to_string(r.agent_count), format_double(r.per_env_step_us)});
  }
  return t;
}

std::string BenchAgentsReport::to_json_string() const {
  json j;
  j["meta"] = meta_to_json(meta);
  j["slopes"] = slopes;
  j["rows"] = json::array();
  for (const BenchAgentsRow& r : rows) {
    j["rows"].push_back({{"obs_mode", r.obs_mode},
                         {"agent_count", r.agent_count},
                         {"per_env_step_us", r.per_env_step_us}});
  }
  return j.dump(2);
}

std::string BenchAgentsReport::summary() const {
  std::ostringstream os;
  os << "bench-agents:\n";
  for (const BenchAgentsRow& r : rows) {
    char buf[120];
    std::snprintf(buf, sizeof buf, "  %-8s N=%-6lld per-env step=%.2f us\n", r.obs_mode.c_str(),
                  static_cast<long long>(r.agent_count), r.per_env_step_us);
    os << buf;
  }
  for (const auto& [mode, slope] : slopes) {
    os << "  log-log slope (" << mode << ") = " << format_double(slope) << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Training

Table TrainingReport::table() const {
  Table t;
  meta_into_table(meta, t);
  t.columns = {"iteration", "wall_ms", "steps_per_sec"};
  for (const std::string& tag : tags) {
    t.columns.push_back("mean_episode_reward_" + tag);
    t.columns.push_back("episodes_" + tag);
  }
  for (const char* c : {"total_loss", "policy_loss", "value_loss", "entropy"}) {
    t.columns.emplace_back(c);
  }
  for (const IterationRow& r : rows) {
    std::vector<std::string> row = {std::to_string(r.iteration), format_double(r.wall_ms),
                                    format_double(r.steps_per_sec)};
    for (size_t g = 0; g < tags.size(); ++g) {
      row.push_back(format_double(r.mean_episode_reward[g]));
      row.push_back(std::to_string(r.episodes_completed[g]));
    }
    row.push_back(format_double(r.total_loss));
    row.push_back(format_double(r.policy_loss));
    row.push_back(format_double(r.value_loss));
    row.push_back(format_double(r.entropy));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string TrainingReport::to_json_string() const {
  json j;
  j["meta"] = meta_to_json(meta);
  j["tags"] = tags;
  j["rows"] = json::array();
  for (const IterationRow& r : rows) {
    json jr = {{"iteration", r.iteration},     {"wall_ms", r.wall_ms},
               {"steps_per_sec", r.steps_per_sec}, {"total_loss", r.total_loss},
               {"policy_loss", r.policy_loss}, {"value_loss", r.value_loss},
               {"entropy", r.entropy}};
    for (size_t g = 0; g < tags.size(); ++g) {
      const double v = r.mean_episode_reward[g];
      jr["mean_episode_reward"][tags[g]] = std::isnan(v) ? json() : json(v);
      jr["episodes"][tags[g]] = r.episodes_completed[g];
    }
    j["rows"].push_back(jr);
  }
  return j.dump(2);
}

std::string TrainingReport::summary() const {
  std::ostringstream os;
  os << "train: " << rows.size() << " iterations";
  if (!rows.empty()) {
    const IterationRow& last = rows.back();
    os << ", last:";
    for (size_t g = 0; g < tags.size(); ++g) {
      os << " reward_" << tags[g] << "=" << format_double(last.mean_episode_reward[g]);
    }
    os << " loss=" << format_double(last.total_loss);
  }
  os << "\n";
  return os.str();
}

namespace {

std::string checkpoint_path(const std::string& dir, const std::string& tag,
                            const std::string& suffix) {
  return dir + "/checkpoint_" + tag + suffix + ".bin";
}

void save_all_checkpoints(const std::string& dir, Trainer& trainer, const RunConfig& config,
                          int64_t iteration, const std::string& suffix) {
  for (const std::string& tag : trainer.tags()) {
    CheckpointData data;
    data.params = trainer.params(tag);
    data.adam = trainer.adam(tag);
    data.iteration = iteration;
    json meta = {{"tag", tag},
                 {"iteration", iteration},
                 {"seed", config.trainer.seed},
                 {"config_hash", config.config_hash()},
                 {"version", kVersion}};
    save_checkpoint(checkpoint_path(dir, tag, suffix), data, meta.dump(2));
  }
}

}  // namespace

TrainingReport run_training(const RunConfig& config, std::unique_ptr<Workspace>* keep_workspace) {
  config.validate();
  EngineConfig ecfg = config.engine;
  auto ws_ptr = std::make_unique<Workspace>(build_workspace(config.env, ecfg));
  Workspace& ws = *ws_ptr;
  const PolicyMap map = tag_policy_map(config.env);
  Trainer trainer(*ws.engine, *ws.store, ws.plan.plan, *ws.resets, config.trainer, map,
                  config.env.action_choices());

  int64_t start_iteration = 0;
  if (!config.run.resume_from.empty()) {
    for (const std::string& tag : trainer.tags()) {
      CheckpointData cp = load_checkpoint(checkpoint_path(config.run.resume_from, tag, ""));
      if (!(cp.params.dims == trainer.params(tag).dims)) {
        raise(Errc::shape_mismatch, "resume: checkpoint dims do not match config for tag " + tag);
      }
      trainer.params(tag) = std::move(cp.params);
      if (cp.adam) trainer.adam(tag) = std::move(*cp.adam);
      start_iteration = cp.iteration;
    }
  }

  const std::string& out = config.run.output_dir;
  ensure_output_dir(out);

  TrainingReport report;
  report.meta = make_meta(config, "train");
  report.tags = trainer.tags();

  auto policies_now = [&]() {
    std::map<std::string, const PolicyParams*> p;
    for (const std::string& tag : trainer.tags()) p[tag] = &trainer.params(tag);
    return p;
  };

  auto on_iteration = [&](const IterationRow& row) {
    if (out.empty() || config.trainer.checkpoint_every <= 0) return;
    if ((row.iteration - start_iteration) % config.trainer.checkpoint_every != 0) return;
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, "_%06lld", static_cast<long long>(row.iteration));
    save_all_checkpoints(out, trainer, config, row.iteration, suffix);
    save_all_checkpoints(out, trainer, config, row.iteration, "");
    if (config.run.dump_trajectory) {
      const auto p = policies_now();
      dump_trajectory_csv(config.env, p, map, out + "/trajectory" + suffix + ".csv");
    }
  };

  try {
    report.rows = trainer.train(start_iteration, on_iteration);
  } catch (const Error& e) {
    if (e.code() == Errc::non_finite && !out.empty()) {
      save_all_checkpoints(out, trainer, config, start_iteration, "_diverged");
    }
    throw;
  }

  const int64_t final_iteration = start_iteration + config.trainer.iterations;
  if (!out.empty()) {
    save_all_checkpoints(out, trainer, config, final_iteration, "");
    report.table().write_csv(out + "/metrics.csv");
    write_text_file(out + "/report.json", report.to_json_string());
    if (config.run.dump_trajectory) {
      const auto p = policies_now();
      dump_trajectory_csv(config.env, p, map, out + "/trajectory_final.csv");
    }
    for (const std::string& name : config.run.dump_arrays) {
      dump_array_csv(*ws.store, name, out + "/array_" + name + ".csv");
    }
  }
  if (keep_workspace) *keep_workspace = std::move(ws_ptr);
  return report;
}

// ---------------------------------------------------------------------------
// Dumps

void dump_array_csv(const DataStore& store, const std::string& array, const std::string& path) {
  const ArrayHandle h = store.handle(array);
  const ArrayInfo& info = store.info(h);
  std::ofstream os(path, std::ios::trunc);
  if (!os) raise(Errc::io_error, "cannot open for writing: " + path);
  os << "env";
  for (int64_t i = 0; i < info.env_stride; ++i) os << ",v" << i;
  os << "\n";
  for (int64_t e = 0; e < store.num_envs(); ++e) {
    os << e;
    switch (info.spec.kind) {
      case ElementKind::Real32: {
        const float* row = store.f32(h).data() + e * info.env_stride;
        for (int64_t i = 0; i < info.env_stride; ++i) os << "," << format_double(row[i]);
        break;
      }
      case ElementKind::Int32: {
        const int32_t* row = store.i32(h).data() + e * info.env_stride;
        for (int64_t i = 0; i < info.env_stride; ++i) os << "," << row[i];
        break;
      }
      case ElementKind::Bool8: {
        const uint8_t* row = store.u8(h).data() + e * info.env_stride;
        for (int64_t i = 0; i < info.env_stride; ++i) os << "," << static_cast<int>(row[i]);
        break;
      }
    }
    os << "\n";
  }
}

void dump_trajectory_csv(const TagConfig& cfg,
                         const std::map<std::string, const PolicyParams*>& policies,
                         const PolicyMap& map, const std::string& path) {
  EngineConfig ecfg;
  ecfg.num_envs = 1;
  ecfg.num_agents = cfg.num_agents();
  ecfg.worker_count = 1;
  Workspace ws = build_workspace(cfg, ecfg);
  // A single episode, frozen once done.
  RolloutDriver driver(ws, &map, &policies, cfg.seed ^ 0x7472616aULL);
  driver.set_auto_reset(false);

  std::ofstream os(path, std::ios::trunc);
  if (!os) raise(Errc::io_error, "cannot open for writing: " + path);
  os << "step,env,agent,x,y,active,is_tagger\n";

  const DataStore& store = *ws.store;
  const int64_t A = cfg.num_agents();
  std::span<const float> xs = store.f32(store.handle("loc_x"));
  std::span<const float> ys = store.f32(store.handle("loc_y"));
  std::span<const uint8_t> active = store.u8(store.handle("active"));
  std::span<const uint8_t> is_tagger = store.u8(store.handle("is_tagger"));
  std::span<const uint8_t> done = store.u8(store.handle(kDone));

  for (int64_t t = 0; t < cfg.episode_length; ++t) {
    if (!done[0]) driver.step(nullptr);
    for (int64_t a = 0; a < A; ++a) {
      os << (t + 1) << ",0," << a << "," << format_double(xs[static_cast<size_t>(a)]) << ","
         << format_double(ys[static_cast<size_t>(a)]) << ","
         << static_cast<int>(active[static_cast<size_t>(a)]) << ","
         << static_cast<int>(is_tagger[static_cast<size_t>(a)]) << "\n";
    }
  }
}

}  // namespace warp
