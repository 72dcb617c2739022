#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "traces/stream.hpp"

namespace netshaper::traces {

// max over window starts t_w of || a_{t_w,W} - b_{t_w,W} ||_1 at bucket
// granularity T. Candidate starts are every packet timestamp minus jT for
// j = 0..W/T; the L1 distance is piecewise constant between those points, so
// the maximum is exact over all real-valued starts.
Bytes neighboring_distance(const Stream& a, const Stream& b, Nanos W, Nanos T);

inline bool are_neighbors(const Stream& a, const Stream& b, Nanos W, Nanos T, Bytes delta_w) {
  return neighboring_distance(a, b, W, T) <= delta_w;
}

struct DistanceTable {
  Bytes p50 = 0;
  Bytes p90 = 0;
  Bytes p99 = 0;
  Bytes max = 0;
  std::vector<Bytes> distances;  // all unordered pairs, sorted ascending
};

// Nearest-rank percentile (rank = ceil(p/100 * n)) of an ascending sample.
Bytes nearest_rank(std::span<const Bytes> sorted, int percent);

DistanceTable pairwise_distance_distribution(std::span<const Stream> streams, Nanos W, Nanos T);

}  // namespace netshaper::traces
