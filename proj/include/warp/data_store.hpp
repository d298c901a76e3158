#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "warp/common.hpp"

namespace warp {

enum class ElementKind : uint8_t { Real32, Int32, Bool8 };

inline int64_t element_size(ElementKind kind) {
  switch (kind) {
    case ElementKind::Real32: return 4;
    case ElementKind::Int32: return 4;
    case ElementKind::Bool8: return 1;
  }
  return 0;
}

// Canonical RL placeholders. lock() refuses stores that miss any of them.
inline constexpr const char* kObservations = "observations";
inline constexpr const char* kSampledActions = "sampled_actions";
inline constexpr const char* kRewards = "rewards";
inline constexpr const char* kDone = "done";

struct ArraySpec {
  std::string name;
  std::vector<int64_t> shape;  // shape[0] = num_envs, optional shape[1] = num_agents
  ElementKind kind = ElementKind::Real32;
  bool snapshot_on_reset = false;
};

// Handle into a store, valid for the lifetime of the store.
using ArrayHandle = int32_t;
inline constexpr ArrayHandle kInvalidHandle = -1;

struct ArrayInfo {
  ArraySpec spec;
  int64_t total_elems = 0;
  int64_t env_stride = 0;    // elements per environment row
  int64_t agent_stride = 0;  // elements per agent slice; 0 when no agent axis
  bool has_agent_axis = false;
};

// Single authoritative container for all simulation state. Arrays are
// registered once, then the structure is locked and only the contents mutate,
// always in place. Env rows are contiguous (row-major, env outermost) so one
// environment is one cache-friendly work unit.
class DataStore {
 public:
  DataStore(int64_t num_envs, int64_t num_agents);

  int64_t num_envs() const noexcept { return num_envs_; }
  int64_t num_agents() const noexcept { return num_agents_; }
  bool locked() const noexcept { return locked_; }

  ArrayHandle register_array(const ArraySpec& spec, std::span<const float> initial);
  ArrayHandle register_array(const ArraySpec& spec, std::span<const int32_t> initial);
  ArrayHandle register_array(const ArraySpec& spec, std::span<const uint8_t> initial);
  // Zero-filled registration.
  ArrayHandle register_array(const ArraySpec& spec);

  // Freezes the set of arrays; contents stay mutable in place.
  void lock();

  bool has_array(const std::string& name) const { return index_.count(name) != 0; }
  ArrayHandle handle(const std::string& name) const;
  const ArrayInfo& info(ArrayHandle h) const { return arrays_[check_handle(h)].info; }
  const ArrayInfo& info(const std::string& name) const { return info(handle(name)); }
  std::vector<std::string> array_names() const;

  // Typed whole-array views. Kind-checked; pointers stay valid after lock().
  std::span<float> f32(ArrayHandle h);
  std::span<int32_t> i32(ArrayHandle h);
  std::span<uint8_t> u8(ArrayHandle h);
  std::span<const float> f32(ArrayHandle h) const;
  std::span<const int32_t> i32(ArrayHandle h) const;
  std::span<const uint8_t> u8(ArrayHandle h) const;

  // Mutable view over one environment's sub-array. Aliases the store: writes
  // are visible through every other view immediately, no copies.
  std::span<float> env_slice_f32(const std::string& name, int64_t env_id);
  std::span<int32_t> env_slice_i32(const std::string& name, int64_t env_id);
  std::span<uint8_t> env_slice_u8(const std::string& name, int64_t env_id);

  // Raw bytes of one env row (works for any kind; used by the harness dump
  // and the consistency comparator).
  std::span<const std::byte> env_row_bytes(ArrayHandle h, int64_t env_id) const;
  std::span<std::byte> env_row_bytes(ArrayHandle h, int64_t env_id);

  // Restores the listed environments' rows of every snapshot_on_reset array
  // to their registration-time content. Rows of other envs are untouched.
  void restore_snapshot(std::span<const int64_t> env_ids);

 private:
  struct Entry {
    ArrayInfo info;
    std::vector<std::byte> buffer;
    std::vector<std::byte> snapshot;  // empty unless snapshot_on_reset
  };

  ArrayHandle register_bytes(const ArraySpec& spec, const void* initial, int64_t count);
  int32_t check_handle(ArrayHandle h) const;
  Entry& entry_for(const std::string& name, ElementKind kind);
  void check_env(int64_t env_id) const;

  int64_t num_envs_;
  int64_t num_agents_;
  bool locked_ = false;
  std::vector<Entry> arrays_;
  std::unordered_map<std::string, ArrayHandle> index_;
};

}  // namespace warp
