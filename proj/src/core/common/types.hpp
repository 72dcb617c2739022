#pragma once

#include <cstdint>
#include <limits>

namespace netshaper {

// All timestamps and durations are integer nanoseconds; sizes are bytes.
using Nanos = std::int64_t;
using Bytes = std::int64_t;
using FlowId = std::uint32_t;

inline constexpr Nanos kNanosPerMilli = 1'000'000;
inline constexpr Nanos kNanosPerSecond = 1'000'000'000;
inline constexpr Bytes kUnbounded = std::numeric_limits<Bytes>::max();

constexpr Nanos millis(std::int64_t ms) { return ms * kNanosPerMilli; }

// Floor division that rounds toward negative infinity.
constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace netshaper
