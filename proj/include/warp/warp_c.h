/* C interface to the warp engine. All functionality is reachable through an
 * opaque session: load a JSON run config, apply overrides, run one of the
 * modes, then read the report back as JSON or a printable summary.
 *
 * Thread safety: sessions are not synchronized; use one per thread. Error
 * messages are thread-local and survive until the next failing call on the
 * same thread.
 */
#ifndef WARP_C_H
#define WARP_C_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#ifndef WD_API
#define WD_API __attribute__((visibility("default")))
#endif

typedef enum wd_status {
  WD_OK = 0,
  WD_ERR_INVALID_ARGUMENT,
  WD_ERR_DUPLICATE_NAME,
  WD_ERR_SHAPE_MISMATCH,
  WD_ERR_STORE_LOCKED,
  WD_ERR_MISSING_PLACEHOLDER,
  WD_ERR_UNKNOWN_NAME,
  WD_ERR_INDEX_OUT_OF_RANGE,
  WD_ERR_INVALID_CONFIG,
  WD_ERR_STEP_FAILURE,
  WD_ERR_NON_FINITE,
  WD_ERR_PARSE,
  WD_ERR_IO,
  WD_ERR_STATE,
  WD_ERR_UNKNOWN
} wd_status;

typedef struct wd_session wd_session;

/* Library version string, e.g. "0.1.0". */
WD_API const char* wd_version(void);

/* Stable name for a status code, e.g. "WD_ERR_PARSE". */
WD_API const char* wd_status_name(wd_status status);

/* Message describing the most recent failure on this thread ("" if none). */
WD_API const char* wd_last_error(void);

/* Creates a session from JSON text / a JSON file. On failure returns the
 * error code, sets wd_last_error(), and leaves *out untouched. The session
 * must be released with wd_session_close(). */
WD_API wd_status wd_session_open(const char* config_json, wd_session** out);
WD_API wd_status wd_session_open_file(const char* path, wd_session** out);
WD_API void wd_session_close(wd_session* session);

/* Config overrides; apply before running. The seed override sets both the
 * environment and trainer seeds. workers <= 0 selects the hardware count. */
WD_API wd_status wd_session_set_seed(wd_session* session, uint64_t seed);
WD_API wd_status wd_session_set_workers(wd_session* session, int32_t workers);
WD_API wd_status wd_session_set_output_dir(wd_session* session, const char* dir);

/* Effective config as canonical JSON, and its hash. */
WD_API const char* wd_session_config_json(wd_session* session);
WD_API const char* wd_session_config_hash(wd_session* session);

/* Run modes. Each writes report files under the output dir (when set) and
 * retains the report in the session. wd_session_run_check returns
 * WD_ERR_STATE when the consistency sweep finds a divergence. */
WD_API wd_status wd_session_run_check(wd_session* session);
WD_API wd_status wd_session_run_bench_envs(wd_session* session);
WD_API wd_status wd_session_run_bench_agents(wd_session* session);
WD_API wd_status wd_session_run_training(wd_session* session);

/* Last run's report as JSON / human-readable lines; NULL before any run. */
WD_API const char* wd_session_report_json(wd_session* session);
WD_API const char* wd_session_summary(wd_session* session);

/* Debug dump of one store array to CSV (one row per env, features
 * flattened). Valid after run_check or run_training, which keep their final
 * store alive in the session. */
WD_API wd_status wd_session_dump_array(wd_session* session, const char* array_name,
                                       const char* csv_path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* WARP_C_H */
