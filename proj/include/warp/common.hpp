#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace warp {

inline constexpr const char* kVersion = "0.1.0";

// Error conditions surfaced by the library. The C API maps these 1:1 onto
// wd_status codes, so additions here need a matching entry in warp_c.h.
enum class Errc : int32_t {
  ok = 0,
  invalid_argument,
  duplicate_name,
  shape_mismatch,
  store_locked,
  missing_placeholder,
  unknown_name,
  index_out_of_range,
  invalid_config,
  step_failure,
  non_finite,
  parse_error,
  io_error,
  state_error,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace warp
