#include "warp/policy_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "warp/parallel.hpp"
#include "warp/rng.hpp"

namespace warp {

namespace {

void check_dims(const PolicyDims& dims) {
  if (dims.obs_dim < 1 || dims.num_categories < 1 || dims.num_choices < 1 || dims.hidden.empty()) {
    raise(Errc::invalid_argument, "PolicyDims: all dims must be >= 1 and hidden non-empty");
  }
  for (int64_t h : dims.hidden) {
    if (h < 1) raise(Errc::invalid_argument, "PolicyDims: hidden sizes must be >= 1");
  }
}

// y[rows] += W[rows, cols] * x[cols]
inline void matvec_acc(const double* w, const double* x, double* y, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    const double* wr = w + r * cols;
    double acc = 0.0;
    for (int64_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] += acc;
  }
}

}  // namespace

int64_t PolicyParams::param_count() const {
  int64_t n = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<int64_t>(weights[l].size() + biases[l].size());
  }
  n += static_cast<int64_t>(head_w.size() + head_b.size() + value_w.size()) + 1;
  return n;
}

void PolicyParams::for_each_param(const std::function<void(double&)>& fn) {
  for (size_t l = 0; l < weights.size(); ++l) {
    for (double& p : weights[l]) fn(p);
    for (double& p : biases[l]) fn(p);
  }
  for (double& p : head_w) fn(p);
  for (double& p : head_b) fn(p);
  for (double& p : value_w) fn(p);
  fn(value_b);
}

void PolicyParams::for_each_param(const std::function<void(const double&)>& fn) const {
  const_cast<PolicyParams*>(this)->for_each_param(
      [&fn](double& p) { fn(const_cast<const double&>(p)); });
}

PolicyGrads PolicyGrads::zeros_like(const PolicyParams& p) {
  PolicyGrads g;
  g.weights.resize(p.weights.size());
  g.biases.resize(p.biases.size());
  for (size_t l = 0; l < p.weights.size(); ++l) {
    g.weights[l].assign(p.weights[l].size(), 0.0);
    g.biases[l].assign(p.biases[l].size(), 0.0);
  }
  g.head_w.assign(p.head_w.size(), 0.0);
  g.head_b.assign(p.head_b.size(), 0.0);
  g.value_w.assign(p.value_w.size(), 0.0);
  g.value_b = 0.0;
  return g;
}

void PolicyGrads::accumulate(const PolicyGrads& other) {
  for (size_t l = 0; l < weights.size(); ++l) {
    for (size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += other.weights[l][i];
    for (size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += other.biases[l][i];
  }
  for (size_t i = 0; i < head_w.size(); ++i) head_w[i] += other.head_w[i];
  for (size_t i = 0; i < head_b.size(); ++i) head_b[i] += other.head_b[i];
  for (size_t i = 0; i < value_w.size(); ++i) value_w[i] += other.value_w[i];
  value_b += other.value_b;
}

void PolicyGrads::for_each(const std::function<void(double&)>& fn) {
  for (size_t l = 0; l < weights.size(); ++l) {
    for (double& g : weights[l]) fn(g);
    for (double& g : biases[l]) fn(g);
  }
  for (double& g : head_w) fn(g);
  for (double& g : head_b) fn(g);
  for (double& g : value_w) fn(g);
  fn(value_b);
}

void PolicyGrads::scale(double s) {
  for_each([s](double& g) { g *= s; });
}

double PolicyGrads::squared_norm() const {
  double n = 0.0;
  const_cast<PolicyGrads*>(this)->for_each([&n](double& g) { n += g * g; });
  return n;
}

PolicyParams init_policy(uint64_t seed, const PolicyDims& dims) {
  check_dims(dims);
  PolicyParams p;
  p.dims = dims;
  const uint64_t stream = substream(seed, kStreamParams);

  auto xavier = [&](std::vector<double>& w, int64_t fan_out, int64_t fan_in, int64_t matrix_id) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    w.resize(static_cast<size_t>(fan_out * fan_in));
    for (int64_t r = 0; r < fan_out; ++r) {
      for (int64_t c = 0; c < fan_in; ++c) {
        const double u = uniform({stream, matrix_id, r, c, 0, 0});
        w[static_cast<size_t>(r * fan_in + c)] = (2.0 * u - 1.0) * bound;
      }
    }
  };

  int64_t in = dims.obs_dim;
  int64_t matrix_id = 0;
  for (int64_t h : dims.hidden) {
    p.weights.emplace_back();
    xavier(p.weights.back(), h, in, matrix_id++);
    p.biases.emplace_back(static_cast<size_t>(h), 0.0);
    in = h;
  }
  // Per-category logit blocks get their own Xavier bound (fan_out = choices).
  p.head_w.resize(static_cast<size_t>(dims.logits_width() * in));
  for (int64_t c = 0; c < dims.num_categories; ++c) {
    std::vector<double> block;
    xavier(block, dims.num_choices, in, matrix_id++);
    std::memcpy(p.head_w.data() + c * dims.num_choices * in, block.data(),
                block.size() * sizeof(double));
  }
  p.head_b.assign(static_cast<size_t>(dims.logits_width()), 0.0);
  xavier(p.value_w, 1, in, matrix_id++);
  p.value_b = 0.0;
  return p;
}

ForwardResult forward(const PolicyParams& params, std::span<const double> obs, int64_t batch,
                      ForwardCache* cache) {
  const PolicyDims& dims = params.dims;
  if (batch < 0 || static_cast<int64_t>(obs.size()) != batch * dims.obs_dim) {
    raise(Errc::shape_mismatch, "forward: obs size does not match batch * obs_dim");
  }
  for (double x : obs) {
    if (!std::isfinite(x)) raise(Errc::non_finite, "forward: non-finite observation");
  }

  const int64_t n_layers = static_cast<int64_t>(params.weights.size());
  const int64_t last = dims.hidden.back();

  ForwardResult out;
  out.logits.assign(static_cast<size_t>(batch * dims.logits_width()), 0.0);
  out.values.assign(static_cast<size_t>(batch), 0.0);

  if (cache) {
    cache->batch = batch;
    cache->dims = dims;
    cache->input.assign(obs.begin(), obs.end());
    cache->activations.assign(static_cast<size_t>(n_layers), {});
    for (int64_t l = 0; l < n_layers; ++l) {
      cache->activations[l].assign(static_cast<size_t>(batch * dims.hidden[l]), 0.0);
    }
  }

  std::vector<double> cur, next;
  for (int64_t r = 0; r < batch; ++r) {
    cur.assign(obs.begin() + r * dims.obs_dim, obs.begin() + (r + 1) * dims.obs_dim);
    for (int64_t l = 0; l < n_layers; ++l) {
      const int64_t width = dims.hidden[l];
      next.assign(params.biases[l].begin(), params.biases[l].end());
      matvec_acc(params.weights[l].data(), cur.data(), next.data(), width,
                 static_cast<int64_t>(cur.size()));
      for (double& h : next) h = std::tanh(h);
      if (cache) {
        std::memcpy(cache->activations[l].data() + r * width, next.data(),
                    static_cast<size_t>(width) * sizeof(double));
      }
      cur.swap(next);
    }
    double* logit_row = out.logits.data() + r * dims.logits_width();
    std::memcpy(logit_row, params.head_b.data(),
                static_cast<size_t>(dims.logits_width()) * sizeof(double));
    matvec_acc(params.head_w.data(), cur.data(), logit_row, dims.logits_width(), last);
    double v = params.value_b;
    for (int64_t c = 0; c < last; ++c) v += params.value_w[c] * cur[c];
    out.values[static_cast<size_t>(r)] = v;
  }
  return out;
}

void forward_parallel(const PolicyParams& params, std::span<const double> obs, int64_t batch,
                      int workers, std::span<double> logits_out, std::span<double> values_out) {
  constexpr int64_t kChunk = 256;
  const int64_t D = params.dims.obs_dim;
  const int64_t W = params.dims.logits_width();
  if (static_cast<int64_t>(logits_out.size()) != batch * W ||
      static_cast<int64_t>(values_out.size()) != batch) {
    raise(Errc::shape_mismatch, "forward_parallel: output sizes do not match batch");
  }
  const int64_t n_chunks = (batch + kChunk - 1) / kChunk;
  parallel_chunks(n_chunks, workers, [&](int64_t ci) {
    const int64_t r0 = ci * kChunk;
    const int64_t r1 = std::min(batch, r0 + kChunk);
    const ForwardResult res = forward(
        params, obs.subspan(static_cast<size_t>(r0 * D), static_cast<size_t>((r1 - r0) * D)),
        r1 - r0);
    std::memcpy(logits_out.data() + r0 * W, res.logits.data(),
                static_cast<size_t>((r1 - r0) * W) * sizeof(double));
    std::memcpy(values_out.data() + r0, res.values.data(),
                static_cast<size_t>(r1 - r0) * sizeof(double));
  });
}

PolicyGrads backward(const PolicyParams& params, const ForwardCache& cache,
                     std::span<const double> dlogits, std::span<const double> dvalues) {
  const PolicyDims& dims = params.dims;
  if (cache.batch == 0 || !(cache.dims == dims)) {
    raise(Errc::state_error, "backward: missing or mismatched forward cache");
  }
  if (static_cast<int64_t>(dlogits.size()) != cache.batch * dims.logits_width() ||
      static_cast<int64_t>(dvalues.size()) != cache.batch) {
    raise(Errc::shape_mismatch, "backward: gradient shapes do not match cache batch");
  }

  const int64_t n_layers = static_cast<int64_t>(params.weights.size());
  const int64_t last = dims.hidden.back();
  PolicyGrads g = PolicyGrads::zeros_like(params);

  std::vector<double> delta, prev_delta;
  for (int64_t r = 0; r < cache.batch; ++r) {
    const double* h_last = cache.activations[n_layers - 1].data() + r * last;
    const double* dl = dlogits.data() + r * dims.logits_width();
    const double dv = dvalues[static_cast<size_t>(r)];

    // Heads.
    delta.assign(static_cast<size_t>(last), 0.0);
    for (int64_t k = 0; k < dims.logits_width(); ++k) {
      const double dk = dl[k];
      if (dk != 0.0) {
        double* gw = g.head_w.data() + k * last;
        const double* wk = params.head_w.data() + k * last;
        for (int64_t c = 0; c < last; ++c) {
          gw[c] += dk * h_last[c];
          delta[static_cast<size_t>(c)] += dk * wk[c];
        }
        g.head_b[static_cast<size_t>(k)] += dk;
      }
    }
    if (dv != 0.0) {
      for (int64_t c = 0; c < last; ++c) {
        g.value_w[static_cast<size_t>(c)] += dv * h_last[c];
        delta[static_cast<size_t>(c)] += dv * params.value_w[static_cast<size_t>(c)];
      }
      g.value_b += dv;
    }

    // Hidden layers, reverse.
    for (int64_t l = n_layers - 1; l >= 0; --l) {
      const int64_t width = dims.hidden[l];
      const double* act = cache.activations[l].data() + r * width;
      // tanh'(x) = 1 - tanh(x)^2
      for (int64_t i = 0; i < width; ++i) delta[static_cast<size_t>(i)] *= 1.0 - act[i] * act[i];

      const int64_t in_width = (l == 0) ? dims.obs_dim : dims.hidden[l - 1];
      const double* input =
          (l == 0) ? cache.input.data() + r * dims.obs_dim : cache.activations[l - 1].data() + r * in_width;

      prev_delta.assign(static_cast<size_t>(in_width), 0.0);
      double* gw = g.weights[l].data();
      double* gb = g.biases[l].data();
      const double* w = params.weights[l].data();
      for (int64_t i = 0; i < width; ++i) {
        const double d = delta[static_cast<size_t>(i)];
        if (d == 0.0) continue;
        gb[i] += d;
        const double* wi = w + i * in_width;
        double* gwi = gw + i * in_width;
        for (int64_t c = 0; c < in_width; ++c) {
          gwi[c] += d * input[c];
          prev_delta[static_cast<size_t>(c)] += d * wi[c];
        }
      }
      delta.swap(prev_delta);
    }
  }
  return g;
}

namespace {

constexpr uint32_t kCheckpointMagic = 0x57445031;  // "WDP1"

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

void write_vec(std::ofstream& os, const std::vector<double>& v) {
  write_pod(os, static_cast<int64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_vec(std::ifstream& is) {
  int64_t n = 0;
  read_pod(is, n);
  if (n < 0) raise(Errc::io_error, "checkpoint: corrupt vector length");
  std::vector<double> v(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data,
                     const std::string& meta_json) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(Errc::io_error, "cannot open checkpoint for writing: " + path);
  const PolicyDims& dims = data.params.dims;
  write_pod(os, kCheckpointMagic);
  write_pod(os, dims.obs_dim);
  write_pod(os, static_cast<int64_t>(dims.hidden.size()));
  for (int64_t h : dims.hidden) write_pod(os, h);
  write_pod(os, dims.num_categories);
  write_pod(os, dims.num_choices);
  write_pod(os, data.iteration);
  write_pod(os, static_cast<uint8_t>(data.adam.has_value() ? 1 : 0));
  for (size_t l = 0; l < data.params.weights.size(); ++l) {
    write_vec(os, data.params.weights[l]);
    write_vec(os, data.params.biases[l]);
  }
  write_vec(os, data.params.head_w);
  write_vec(os, data.params.head_b);
  write_vec(os, data.params.value_w);
  write_pod(os, data.params.value_b);
  if (data.adam) {
    write_vec(os, data.adam->m);
    write_vec(os, data.adam->v);
    write_pod(os, data.adam->t);
  }
  if (!os) raise(Errc::io_error, "checkpoint write failed: " + path);
  os.close();

  std::ofstream meta(path + ".json", std::ios::trunc);
  if (!meta) raise(Errc::io_error, "cannot open checkpoint metadata: " + path + ".json");
  meta << meta_json << "\n";
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(Errc::io_error, "cannot open checkpoint: " + path);
  uint32_t magic = 0;
  read_pod(is, magic);
  if (magic != kCheckpointMagic) raise(Errc::parse_error, "not a checkpoint file: " + path);

  CheckpointData data;
  PolicyDims dims;
  read_pod(is, dims.obs_dim);
  int64_t n_hidden = 0;
  read_pod(is, n_hidden);
  if (n_hidden < 1 || n_hidden > 64) raise(Errc::parse_error, "checkpoint: corrupt hidden count");
  dims.hidden.resize(static_cast<size_t>(n_hidden));
  for (int64_t& h : dims.hidden) read_pod(is, h);
  read_pod(is, dims.num_categories);
  read_pod(is, dims.num_choices);
  read_pod(is, data.iteration);
  uint8_t has_adam = 0;
  read_pod(is, has_adam);

  data.params.dims = dims;
  for (int64_t l = 0; l < n_hidden; ++l) {
    data.params.weights.push_back(read_vec(is));
    data.params.biases.push_back(read_vec(is));
  }
  data.params.head_w = read_vec(is);
  data.params.head_b = read_vec(is);
  data.params.value_w = read_vec(is);
  read_pod(is, data.params.value_b);
  if (has_adam) {
    AdamState adam;
    adam.m = read_vec(is);
    adam.v = read_vec(is);
    read_pod(is, adam.t);
    data.adam = std::move(adam);
  }
  if (!is) raise(Errc::io_error, "checkpoint read failed: " + path);
  return data;
}

void validate_policy_map(const PolicyMap& map, int64_t num_agents) {
  std::vector<int32_t> seen(static_cast<size_t>(num_agents), 0);
  for (const auto& [tag, agents] : map) {
    if (tag.empty()) raise(Errc::invalid_argument, "policy map: empty tag name");
    for (size_t i = 0; i < agents.size(); ++i) {
      const int64_t a = agents[i];
      if (a < 0 || a >= num_agents) {
        raise(Errc::index_out_of_range, "policy map: agent id out of range in tag \"" + tag + "\"");
      }
      if (i > 0 && agents[i - 1] >= a) {
        raise(Errc::invalid_argument, "policy map: agent ids must be sorted in tag \"" + tag + "\"");
      }
      if (seen[static_cast<size_t>(a)]++) {
        raise(Errc::invalid_argument, "policy map: agent assigned to two tags");
      }
    }
  }
  for (int64_t a = 0; a < num_agents; ++a) {
    if (!seen[static_cast<size_t>(a)]) {
      raise(Errc::invalid_argument, "policy map: agent " + std::to_string(a) + " has no tag");
    }
  }
}

}  // namespace warp
