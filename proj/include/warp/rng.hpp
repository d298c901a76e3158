#pragma once

#include <cstdint>

namespace warp {

// Stateless counter-based uniform generator. Every (env, agent) pair can draw
// without shared RNG state or locks: the value is a pure function of the key,
// so replay is exact for any worker count and any draw order.

struct SampleKey {
  uint64_t seed = 0;
  int64_t step = 0;
  int64_t env_id = 0;
  int64_t agent_id = 0;
  int64_t category = 0;
  int64_t draw = 0;
};

namespace detail {

// splitmix64 finalizer (Steele et al.), full-avalanche 64-bit mix.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t absorb(uint64_t h, uint64_t v) { return mix64(h ^ (v + 0x9e3779b97f4a7c15ULL)); }

}  // namespace detail

inline uint64_t key_bits(const SampleKey& key) {
  uint64_t h = detail::mix64(key.seed);
  h = detail::absorb(h, static_cast<uint64_t>(key.step));
  h = detail::absorb(h, static_cast<uint64_t>(key.env_id));
  h = detail::absorb(h, static_cast<uint64_t>(key.agent_id));
  h = detail::absorb(h, static_cast<uint64_t>(key.category));
  h = detail::absorb(h, static_cast<uint64_t>(key.draw));
  return h;
}

// Uniform in [0, 1) with 53 random mantissa bits.
inline double uniform(const SampleKey& key) {
  return static_cast<double>(key_bits(key) >> 11) * 0x1.0p-53;
}

// Derives an independent stream from a user seed. Distinct purpose constants
// keep action sampling, placement draws and weight init from ever sharing keys.
inline uint64_t substream(uint64_t seed, uint64_t purpose) {
  return detail::mix64(detail::mix64(seed) ^ purpose);
}

inline constexpr uint64_t kStreamActions = 0x616374696f6e7331ULL;
inline constexpr uint64_t kStreamPlacement = 0x706c6163656d656eULL;
inline constexpr uint64_t kStreamParams = 0x706172616d733030ULL;

}  // namespace warp
