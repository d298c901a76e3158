#include "warp/reset_manager.hpp"

#include <cstring>

namespace warp {

ResetManager::ResetManager(DataStore& store, ResetPolicy policy) : policy_(std::move(policy)) {
  done_handle_ = store.handle(kDone);
  for (const std::string& name : policy_.zero_on_reset) {
    const ArrayHandle h = store.handle(name);  // throws unknown-name
    if (store.info(h).spec.snapshot_on_reset) {
      raise(Errc::invalid_argument,
            "ResetPolicy: \"" + name + "\" is snapshot_on_reset and cannot also be zero-filled");
    }
    zero_handles_.push_back(h);
  }
  episode_counter_.assign(static_cast<size_t>(store.num_envs()), 0);
}

std::vector<int64_t> ResetManager::detect_done(const DataStore& store) const {
  std::span<const uint8_t> done = store.u8(done_handle_);
  std::vector<int64_t> ids;
  for (int64_t e = 0; e < store.num_envs(); ++e) {
    if (done[static_cast<size_t>(e)]) ids.push_back(e);
  }
  return ids;
}

void ResetManager::auto_reset(DataStore& store, std::span<const int64_t> env_ids) {
  if (env_ids.empty()) return;
  store.restore_snapshot(env_ids);
  for (const ArrayHandle h : zero_handles_) {
    for (int64_t e : env_ids) {
      std::span<std::byte> row = store.env_row_bytes(h, e);
      std::memset(row.data(), 0, row.size());
    }
  }
  std::span<uint8_t> done = store.u8(done_handle_);
  for (int64_t e : env_ids) {
    done[static_cast<size_t>(e)] = 0;
    episode_counter_[static_cast<size_t>(e)] += 1;
    if (policy_.reinitialize) policy_.reinitialize(store, e, episode_counter_[static_cast<size_t>(e)]);
  }
}

int64_t ResetManager::episodes_started(int64_t env_id) const {
  if (env_id < 0 || static_cast<size_t>(env_id) >= episode_counter_.size()) {
    raise(Errc::index_out_of_range, "episodes_started: env_id out of range");
  }
  return episode_counter_[static_cast<size_t>(env_id)];
}

}  // namespace warp
