#include "warp/warp_c.h"

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "warp/harness.hpp"

struct wd_session {
  warp::RunConfig config;
  std::string report_json;
  std::string summary;
  std::string config_json;
  std::string config_hash;
  std::unique_ptr<warp::Workspace> workspace;
};

namespace {

thread_local std::string g_last_error;

wd_status map_errc(warp::Errc code) {
  using warp::Errc;
  switch (code) {
    case Errc::ok: return WD_OK;
    case Errc::invalid_argument: return WD_ERR_INVALID_ARGUMENT;
    case Errc::duplicate_name: return WD_ERR_DUPLICATE_NAME;
    case Errc::shape_mismatch: return WD_ERR_SHAPE_MISMATCH;
    case Errc::store_locked: return WD_ERR_STORE_LOCKED;
    case Errc::missing_placeholder: return WD_ERR_MISSING_PLACEHOLDER;
    case Errc::unknown_name: return WD_ERR_UNKNOWN_NAME;
    case Errc::index_out_of_range: return WD_ERR_INDEX_OUT_OF_RANGE;
    case Errc::invalid_config: return WD_ERR_INVALID_CONFIG;
    case Errc::step_failure: return WD_ERR_STEP_FAILURE;
    case Errc::non_finite: return WD_ERR_NON_FINITE;
    case Errc::parse_error: return WD_ERR_PARSE;
    case Errc::io_error: return WD_ERR_IO;
    case Errc::state_error: return WD_ERR_STATE;
  }
  return WD_ERR_UNKNOWN;
}

template <class Fn>
wd_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const warp::Error& e) {
    g_last_error = e.what();
    return map_errc(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return WD_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown error";
    return WD_ERR_UNKNOWN;
  }
}

wd_status require_session(const wd_session* session) {
  if (session == nullptr) {
    g_last_error = "null session";
    return WD_ERR_INVALID_ARGUMENT;
  }
  return WD_OK;
}

}  // namespace

extern "C" {

const char* wd_version(void) { return warp::kVersion; }

const char* wd_status_name(wd_status status) {
  switch (status) {
    case WD_OK: return "WD_OK";
    case WD_ERR_INVALID_ARGUMENT: return "WD_ERR_INVALID_ARGUMENT";
    case WD_ERR_DUPLICATE_NAME: return "WD_ERR_DUPLICATE_NAME";
    case WD_ERR_SHAPE_MISMATCH: return "WD_ERR_SHAPE_MISMATCH";
    case WD_ERR_STORE_LOCKED: return "WD_ERR_STORE_LOCKED";
    case WD_ERR_MISSING_PLACEHOLDER: return "WD_ERR_MISSING_PLACEHOLDER";
    case WD_ERR_UNKNOWN_NAME: return "WD_ERR_UNKNOWN_NAME";
    case WD_ERR_INDEX_OUT_OF_RANGE: return "WD_ERR_INDEX_OUT_OF_RANGE";
    case WD_ERR_INVALID_CONFIG: return "WD_ERR_INVALID_CONFIG";
    case WD_ERR_STEP_FAILURE: return "WD_ERR_STEP_FAILURE";
    case WD_ERR_NON_FINITE: return "WD_ERR_NON_FINITE";
    case WD_ERR_PARSE: return "WD_ERR_PARSE";
    case WD_ERR_IO: return "WD_ERR_IO";
    case WD_ERR_STATE: return "WD_ERR_STATE";
    case WD_ERR_UNKNOWN: return "WD_ERR_UNKNOWN";
  }
  return "WD_ERR_UNKNOWN";
}

const char* wd_last_error(void) { return g_last_error.c_str(); }

wd_status wd_session_open(const char* config_json, wd_session** out) {
  if (config_json == nullptr || out == nullptr) {
    g_last_error = "null argument";
    return WD_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    auto session = std::make_unique<wd_session>();
    session->config = warp::RunConfig::from_string(config_json);
    session->config.validate();
    *out = session.release();
    return WD_OK;
  });
}

wd_status wd_session_open_file(const char* path, wd_session** out) {
  if (path == nullptr || out == nullptr) {
    g_last_error = "null argument";
    return WD_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    auto session = std::make_unique<wd_session>();
    session->config = warp::RunConfig::from_file(path);
    session->config.validate();
    *out = session.release();
    return WD_OK;
  });
}

void wd_session_close(wd_session* session) { delete session; }

wd_status wd_session_set_seed(wd_session* session, uint64_t seed) {
  if (wd_status s = require_session(session); s != WD_OK) return s;
  session->config.env.seed = seed;
  session->config.trainer.seed = seed;
  return WD_OK;
}

wd_status wd_session_set_workers(wd_session* session, int32_t workers) {
  if (wd_status s = require_session(session); s != WD_OK) return s;
  session->config.engine.worker_count = workers;
  return WD_OK;
}

wd_status wd_session_set_output_dir(wd_session* session, const char* dir) {
  if (wd_status s = require_session(session); s != WD_OK) return s;
  if (dir == nullptr) {
    g_last_error = "null output dir";
    return WD_ERR_INVALID_ARGUMENT;
  }
  session->config.run.output_dir = dir;
  return WD_OK;
}

const char* wd_session_config_json(wd_session* session) {
  if (require_session(session) != WD_OK) return nullptr;
  session->config_json = session->config.to_json_string();
  return session->config_json.c_str();
}

const char* wd_session_config_hash(wd_session* session) {
  if (require_session(session) != WD_OK) return nullptr;
  session->config_hash = session->config.config_hash();
  return session->config_hash.c_str();
}

namespace {

void write_report_files(const wd_session& session, const warp::Table& table,
                        const std::string& json_text, const char* csv_name) {
  const std::string& out = session.config.run.output_dir;
  if (out.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  table.write_csv(out + "/" + csv_name);
  std::ofstream os(out + "/report.json", std::ios::trunc);
  os << json_text;
}

}  // namespace

wd_status wd_session_run_check(wd_session* session) {
  if (wd_status s = require_session(session); s != WD_OK) return s;
  return guarded([&] {
    const warp::CheckReport report = warp::check_consistency(session->config);
    session->report_json = report.to_json_string();
    session->summary = report.summary();
    write_report_files(*session, report.table(), session->report_json, "check.csv");
    if (!report.passed) {
      g_last_error = "consistency check failed; see report for first divergence";
      return WD_ERR_STATE;
    }
    return WD_OK;
  });
}

wd_status wd_session_run_bench_envs(wd_session* session) {
  if (wd_status s = require_session(session); s != WD_OK) return s;
  return guarded([&] {
    const warp::BenchEnvsReport report = warp::bench_envs(session->config);
    session->report_json = report.to_json_string();
    session->summary = report.summary();
    write_report_files(*session, report.table(), session->report_json, "bench_envs.csv");
    return WD_OK;
  });
}

wd_status wd_session_run_bench_agents(wd_session* session) {
  if (wd_status s = require_session(session); s != WD_OK) return s;
  return guarded([&] {
    const warp::BenchAgentsReport report = warp::bench_agents(session->config);
    session->report_json = report.to_json_string();
    session->summary = report.summary();
    write_report_files(*session, report.table(), session->report_json, "bench_agents.csv");
    return WD_OK;
  });
}

wd_status wd_session_run_training(wd_session* session) {
  if (wd_status s = require_session(session); s != WD_OK) return s;
  return guarded([&] {
    const warp::TrainingReport report =
        warp::run_training(session->config, &session->workspace);
    session->report_json = report.to_json_string();
    session->summary = report.summary();
    // run_training already wrote metrics.csv + report.json when an output
    // dir is configured.
    return WD_OK;
  });
}

const char* wd_session_report_json(wd_session* session) {
  if (require_session(session) != WD_OK) return nullptr;
  return session->report_json.empty() ? nullptr : session->report_json.c_str();
}

const char* wd_session_summary(wd_session* session) {
  if (require_session(session) != WD_OK) return nullptr;
  return session->summary.empty() ? nullptr : session->summary.c_str();
}

wd_status wd_session_dump_array(wd_session* session, const char* array_name,
                                const char* csv_path) {
  if (wd_status s = require_session(session); s != WD_OK) return s;
  if (array_name == nullptr || csv_path == nullptr) {
    g_last_error = "null argument";
    return WD_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    if (!session->workspace) {
      // Materialize a fresh episode-0 store for inspection.
      session->workspace = std::make_unique<warp::Workspace>(
          warp::build_workspace(session->config.env, session->config.engine));
    }
    warp::dump_array_csv(*session->workspace->store, array_name, csv_path);
    return WD_OK;
  });
}

}  // extern "C"
