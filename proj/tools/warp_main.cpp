// warp: command-line front-end for the engine, built on the C API only.
//
//   warp check|bench-envs|bench-agents|train --config <path>
//        [--seed N] [--out DIR] [--workers N]
//
// WARP_WORKERS, when set, overrides the worker count from both the config
// file and --workers.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "warp/warp_c.h"

namespace {

struct SessionGuard {
  wd_session* s = nullptr;
  ~SessionGuard() { wd_session_close(s); }
};

int fail(wd_status status) {
  std::fprintf(stderr, "error: %s (%s)\n", wd_last_error(), wd_status_name(status));
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"warp: data-oriented multi-agent RL engine"};
  app.set_version_flag("--version", std::string(wd_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  bool workers_set = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config JSON")->required();
    cmd->add_option("--out", output_dir, "output directory (overrides run.output_dir)");
    cmd->add_option("--seed", seed, "seed override (env and trainer)")
        ->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--workers", workers, "worker count (0 = hardware)")
        ->each([&](const std::string&) { workers_set = true; });
  };

  CLI::App* check = app.add_subcommand("check", "engine vs reference consistency sweep");
  CLI::App* bench_envs = app.add_subcommand("bench-envs", "throughput vs environment count");
  CLI::App* bench_agents = app.add_subcommand("bench-agents", "per-env step time vs agent count");
  CLI::App* train = app.add_subcommand("train", "run the training loop");
  for (CLI::App* cmd : {check, bench_envs, bench_agents, train}) add_common(cmd);

  CLI11_PARSE(app, argc, argv);

  SessionGuard session;
  wd_status status = wd_session_open_file(config_path.c_str(), &session.s);
  if (status != WD_OK) return fail(status);

  if (seed_set) wd_session_set_seed(session.s, seed);
  if (workers_set) wd_session_set_workers(session.s, workers);
  if (const char* env_workers = std::getenv("WARP_WORKERS")) {
    wd_session_set_workers(session.s, std::atoi(env_workers));
  }
  if (!output_dir.empty()) wd_session_set_output_dir(session.s, output_dir.c_str());

  if (check->parsed()) {
    status = wd_session_run_check(session.s);
  } else if (bench_envs->parsed()) {
    status = wd_session_run_bench_envs(session.s);
  } else if (bench_agents->parsed()) {
    status = wd_session_run_bench_agents(session.s);
  } else {
    status = wd_session_run_training(session.s);
  }

  if (const char* summary = wd_session_summary(session.s)) std::fputs(summary, stdout);
  if (status != WD_OK) return fail(status);
  return 0;
}
