#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "warp/common.hpp"

namespace warp {

// Fully-connected policy/value network: hidden layers with tanh, one linear
// logit head per action category plus a scalar value head. Parameters are
// plain double buffers; agents mapped to the same policy tag share these
// buffers directly.

struct PolicyDims {
  int64_t obs_dim = 0;
  std::vector<int64_t> hidden = {64, 64};
  int64_t num_categories = 1;
  int64_t num_choices = 1;

  int64_t logits_width() const { return num_categories * num_choices; }
  bool operator==(const PolicyDims&) const = default;
};

struct PolicyParams {
  PolicyDims dims;
  // Hidden layer l: weights[l] is [out, in] row-major, biases[l] is [out].
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  // Policy heads packed as one [num_categories*num_choices, last_hidden] matrix.
  std::vector<double> head_w;
  std::vector<double> head_b;
  // Scalar value head.
  std::vector<double> value_w;
  double value_b = 0.0;

  int64_t param_count() const;
  // Canonical flat order: hidden (W, b) per layer, head_w, head_b, value_w, value_b.
  void for_each_param(const std::function<void(double&)>& fn);
  void for_each_param(const std::function<void(const double&)>& fn) const;
};

// Gradients in the same layout as the parameters.
struct PolicyGrads {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<double> head_w;
  std::vector<double> head_b;
  std::vector<double> value_w;
  double value_b = 0.0;

  static PolicyGrads zeros_like(const PolicyParams& p);
  void accumulate(const PolicyGrads& other);
  void scale(double s);
  double squared_norm() const;
  void for_each(const std::function<void(double&)>& fn);
};

struct ForwardCache {
  int64_t batch = 0;
  PolicyDims dims;
  std::vector<double> input;                    // [batch, obs_dim]
  std::vector<std::vector<double>> activations; // per layer, [batch, width], post-tanh
};

struct ForwardResult {
  std::vector<double> logits;  // [batch, num_categories*num_choices]
  std::vector<double> values;  // [batch]
};

// Xavier-uniform weights, zero biases; deterministic per seed.
PolicyParams init_policy(uint64_t seed, const PolicyDims& dims);

// obs is [batch, obs_dim] row-major. Pass a cache to enable backward().
ForwardResult forward(const PolicyParams& params, std::span<const double> obs, int64_t batch,
                      ForwardCache* cache = nullptr);

// Fixed-chunk parallel forward; results identical for any worker count.
void forward_parallel(const PolicyParams& params, std::span<const double> obs, int64_t batch,
                      int workers, std::span<double> logits_out, std::span<double> values_out);

// Exact reverse-mode gradients, summed over the batch rows, of a scalar loss
// whose gradients w.r.t. logits/values are given.
PolicyGrads backward(const PolicyParams& params, const ForwardCache& cache,
                     std::span<const double> dlogits, std::span<const double> dvalues);

// Adam moments, checkpointable alongside the parameters.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t t = 0;
};

struct CheckpointData {
  PolicyParams params;
  std::optional<AdamState> adam;
  int64_t iteration = 0;
};

// Versioned binary blob: dims header + row-major parameter arrays. The JSON
// metadata sidecar (same path with ".json") carries seed/config-hash/iteration.
void save_checkpoint(const std::string& path, const CheckpointData& data,
                     const std::string& meta_json);
CheckpointData load_checkpoint(const std::string& path);

// policy tag -> sorted agent id list; tags partition 0..num_agents-1.
using PolicyMap = std::map<std::string, std::vector<int64_t>>;
void validate_policy_map(const PolicyMap& map, int64_t num_agents);

}  // namespace warp
