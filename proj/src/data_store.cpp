#include "warp/data_store.hpp"

#include <numeric>

namespace warp {

DataStore::DataStore(int64_t num_envs, int64_t num_agents)
    : num_envs_(num_envs), num_agents_(num_agents) {
  if (num_envs < 1 || num_agents < 1) {
    raise(Errc::invalid_argument, "DataStore requires num_envs >= 1 and num_agents >= 1");
  }
}

ArrayHandle DataStore::register_bytes(const ArraySpec& spec, const void* initial, int64_t count) {
  if (locked_) {
    raise(Errc::store_locked, "register_array(\"" + spec.name + "\"): store is locked");
  }
  if (spec.name.empty()) {
    raise(Errc::invalid_argument, "register_array: empty name");
  }
  if (index_.count(spec.name)) {
    raise(Errc::duplicate_name, "register_array: duplicate name \"" + spec.name + "\"");
  }
  if (spec.shape.empty() || spec.shape[0] != num_envs_) {
    raise(Errc::shape_mismatch,
          "register_array(\"" + spec.name + "\"): shape[0] must equal num_envs");
  }
  int64_t total = 1;
  for (int64_t d : spec.shape) {
    if (d < 1) raise(Errc::shape_mismatch, "register_array(\"" + spec.name + "\"): non-positive dim");
    total *= d;
  }
  if (count != total) {
    raise(Errc::shape_mismatch, "register_array(\"" + spec.name + "\"): initial has " +
                                    std::to_string(count) + " elements, shape needs " +
                                    std::to_string(total));
  }

  Entry e;
  e.info.spec = spec;
  e.info.total_elems = total;
  e.info.env_stride = total / num_envs_;
  e.info.has_agent_axis = spec.shape.size() >= 2 && spec.shape[1] == num_agents_;
  e.info.agent_stride = e.info.has_agent_axis ? e.info.env_stride / num_agents_ : 0;

  const int64_t bytes = total * element_size(spec.kind);
  e.buffer.resize(static_cast<size_t>(bytes));
  std::memcpy(e.buffer.data(), initial, static_cast<size_t>(bytes));
  if (spec.snapshot_on_reset) e.snapshot = e.buffer;

  const ArrayHandle h = static_cast<ArrayHandle>(arrays_.size());
  arrays_.push_back(std::move(e));
  index_.emplace(spec.name, h);
  return h;
}

ArrayHandle DataStore::register_array(const ArraySpec& spec, std::span<const float> initial) {
  if (spec.kind != ElementKind::Real32) {
    raise(Errc::invalid_argument, "register_array(\"" + spec.name + "\"): kind is not Real32");
  }
  return register_bytes(spec, initial.data(), static_cast<int64_t>(initial.size()));
}

ArrayHandle DataStore::register_array(const ArraySpec& spec, std::span<const int32_t> initial) {
  if (spec.kind != ElementKind::Int32) {
    raise(Errc::invalid_argument, "register_array(\"" + spec.name + "\"): kind is not Int32");
  }
  return register_bytes(spec, initial.data(), static_cast<int64_t>(initial.size()));
}

ArrayHandle DataStore::register_array(const ArraySpec& spec, std::span<const uint8_t> initial) {
  if (spec.kind != ElementKind::Bool8) {
    raise(Errc::invalid_argument, "register_array(\"" + spec.name + "\"): kind is not Bool8");
  }
  return register_bytes(spec, initial.data(), static_cast<int64_t>(initial.size()));
}

ArrayHandle DataStore::register_array(const ArraySpec& spec) {
  int64_t total = 1;
  for (int64_t d : spec.shape) total *= d;
  std::vector<std::byte> zeros(static_cast<size_t>(total * element_size(spec.kind)));
  return register_bytes(spec, zeros.data(), total);
}

void DataStore::lock() {
  for (const char* name : {kObservations, kSampledActions, kRewards, kDone}) {
    if (!index_.count(name)) {
      raise(Errc::missing_placeholder, std::string("lock(): placeholder \"") + name +
                                           "\" is not registered");
    }
  }
  locked_ = true;
}

ArrayHandle DataStore::handle(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) raise(Errc::unknown_name, "unknown array \"" + name + "\"");
  return it->second;
}

std::vector<std::string> DataStore::array_names() const {
  std::vector<std::string> names;
  names.reserve(arrays_.size());
  for (const Entry& e : arrays_) names.push_back(e.info.spec.name);
  return names;
}

int32_t DataStore::check_handle(ArrayHandle h) const {
  if (h < 0 || static_cast<size_t>(h) >= arrays_.size()) {
    raise(Errc::unknown_name, "invalid array handle " + std::to_string(h));
  }
  return h;
}

void DataStore::check_env(int64_t env_id) const {
  if (env_id < 0 || env_id >= num_envs_) {
    raise(Errc::index_out_of_range,
          "env_id " + std::to_string(env_id) + " out of range [0, " + std::to_string(num_envs_) + ")");
  }
}

namespace {
template <typename T>
std::span<T> typed_span(std::vector<std::byte>& buf) {
  return {reinterpret_cast<T*>(buf.data()), buf.size() / sizeof(T)};
}
template <typename T>
std::span<const T> typed_span(const std::vector<std::byte>& buf) {
  return {reinterpret_cast<const T*>(buf.data()), buf.size() / sizeof(T)};
}
}  // namespace

std::span<float> DataStore::f32(ArrayHandle h) {
  Entry& e = arrays_[check_handle(h)];
  if (e.info.spec.kind != ElementKind::Real32) {
    raise(Errc::invalid_argument, "array \"" + e.info.spec.name + "\" is not Real32");
  }
  return typed_span<float>(e.buffer);
}

std::span<int32_t> DataStore::i32(ArrayHandle h) {
  Entry& e = arrays_[check_handle(h)];
  if (e.info.spec.kind != ElementKind::Int32) {
    raise(Errc::invalid_argument, "array \"" + e.info.spec.name + "\" is not Int32");
  }
  return typed_span<int32_t>(e.buffer);
}

std::span<uint8_t> DataStore::u8(ArrayHandle h) {
  Entry& e = arrays_[check_handle(h)];
  if (e.info.spec.kind != ElementKind::Bool8) {
    raise(Errc::invalid_argument, "array \"" + e.info.spec.name + "\" is not Bool8");
  }
  return typed_span<uint8_t>(e.buffer);
}

std::span<const float> DataStore::f32(ArrayHandle h) const {
  return const_cast<DataStore*>(this)->f32(h);
}
std::span<const int32_t> DataStore::i32(ArrayHandle h) const {
  return const_cast<DataStore*>(this)->i32(h);
}
std::span<const uint8_t> DataStore::u8(ArrayHandle h) const {
  return const_cast<DataStore*>(this)->u8(h);
}

std::span<float> DataStore::env_slice_f32(const std::string& name, int64_t env_id) {
  check_env(env_id);
  const ArrayHandle h = handle(name);
  const ArrayInfo& in = arrays_[h].info;
  return f32(h).subspan(static_cast<size_t>(env_id * in.env_stride),
                        static_cast<size_t>(in.env_stride));
}

std::span<int32_t> DataStore::env_slice_i32(const std::string& name, int64_t env_id) {
  check_env(env_id);
  const ArrayHandle h = handle(name);
  const ArrayInfo& in = arrays_[h].info;
  return i32(h).subspan(static_cast<size_t>(env_id * in.env_stride),
                        static_cast<size_t>(in.env_stride));
}

std::span<uint8_t> DataStore::env_slice_u8(const std::string& name, int64_t env_id) {
  check_env(env_id);
  const ArrayHandle h = handle(name);
  const ArrayInfo& in = arrays_[h].info;
  return u8(h).subspan(static_cast<size_t>(env_id * in.env_stride),
                       static_cast<size_t>(in.env_stride));
}

std::span<const std::byte> DataStore::env_row_bytes(ArrayHandle h, int64_t env_id) const {
  check_env(env_id);
  const Entry& e = arrays_[check_handle(h)];
  const int64_t row_bytes = e.info.env_stride * element_size(e.info.spec.kind);
  return std::span<const std::byte>(e.buffer).subspan(static_cast<size_t>(env_id * row_bytes),
                                                      static_cast<size_t>(row_bytes));
}

std::span<std::byte> DataStore::env_row_bytes(ArrayHandle h, int64_t env_id) {
  check_env(env_id);
  Entry& e = arrays_[check_handle(h)];
  const int64_t row_bytes = e.info.env_stride * element_size(e.info.spec.kind);
  return std::span<std::byte>(e.buffer).subspan(static_cast<size_t>(env_id * row_bytes),
                                                static_cast<size_t>(row_bytes));
}

void DataStore::restore_snapshot(std::span<const int64_t> env_ids) {
  for (int64_t id : env_ids) check_env(id);
  for (Entry& e : arrays_) {
    if (e.snapshot.empty()) continue;
    const int64_t row_bytes = e.info.env_stride * element_size(e.info.spec.kind);
    for (int64_t id : env_ids) {
      std::memcpy(e.buffer.data() + id * row_bytes, e.snapshot.data() + id * row_bytes,
                  static_cast<size_t>(row_bytes));
    }
  }
}

}  // namespace warp
