#pragma once

#include <optional>

#include "common/types.hpp"

namespace netshaper::dpcore {

// Full shaping configuration for one direction of one tunnel.
struct DpParams {
  double epsilon = 1.0;    // privacy budget (> 0)
  double delta = 1e-6;     // failure probability, 0 < delta < 1
  Bytes delta_w = 0;       // sensitivity over a window of length W (> 0)
  Nanos T = 0;             // shaping interval
  Nanos W = 0;             // neighboring window, a positive multiple of T
  Bytes cutoff = kUnbounded;  // max shaped-buffer length per interval

  std::int64_t queries_per_window() const { return W / T; }

  // Throws Validation (or Config for the W/T relation) on any violation.
  void validate() const;

  friend bool operator==(const DpParams&, const DpParams&) = default;
};

}  // namespace netshaper::dpcore
