#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "warp/data_store.hpp"

namespace warp {

// End-of-step reset of finished environments, in place, while other envs keep
// running. Each array is covered by exactly one of: snapshot-restore (flagged
// at registration), zero-fill (listed here), or leave-alone.
struct ResetPolicy {
  bool auto_reset = true;
  std::vector<std::string> zero_on_reset;
  // Environment-specific re-randomization for the next episode; receives the
  // per-env episode counter so successive episodes differ.
  std::function<void(DataStore&, int64_t env_id, int64_t episode)> reinitialize;
};

class ResetManager {
 public:
  ResetManager(DataStore& store, ResetPolicy policy);

  // Env ids whose done flag is set. Read-only.
  std::vector<int64_t> detect_done(const DataStore& store) const;

  // Snapshot-restore + zero-fill + done-clear + reinitialize for the listed
  // envs; every other env's rows stay bit-unchanged.
  void auto_reset(DataStore& store, std::span<const int64_t> env_ids);

  bool auto_enabled() const noexcept { return policy_.auto_reset; }
  // Episodes started in this env so far (0 = still in the first one).
  int64_t episodes_started(int64_t env_id) const;

 private:
  ResetPolicy policy_;
  ArrayHandle done_handle_;
  std::vector<ArrayHandle> zero_handles_;
  std::vector<int64_t> episode_counter_;
};

}  // namespace warp
