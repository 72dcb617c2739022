#include "traces/distance.hpp"

#include <algorithm>
#include <cstdlib>

#include "common/error.hpp"

namespace netshaper::traces {

namespace {

// Signed cumulative byte difference a - b over time, queried as
// "sum over records with t < x".
class DifferenceProfile {
 public:
  DifferenceProfile(const Stream& a, const Stream& b) {
    std::vector<std::pair<Nanos, Bytes>> events;
    events.reserve(a.size() + b.size());
    for (const auto& r : a.records()) events.emplace_back(r.t, r.len);
    for (const auto& r : b.records()) events.emplace_back(r.t, -r.len);
    std::sort(events.begin(), events.end());
    times_.reserve(events.size());
    prefix_.reserve(events.size() + 1);
    prefix_.push_back(0);
    for (const auto& [t, d] : events) {
      if (!times_.empty() && times_.back() == t) {
        prefix_.back() += d;
      } else {
        times_.push_back(t);
        prefix_.push_back(prefix_.back() + d);
      }
    }
  }

  Bytes before(Nanos x) const {
    auto idx = std::lower_bound(times_.begin(), times_.end(), x) - times_.begin();
    return prefix_[static_cast<std::size_t>(idx)];
  }

  const std::vector<Nanos>& times() const { return times_; }

 private:
  std::vector<Nanos> times_;
  std::vector<Bytes> prefix_;  // prefix_[i] = sum of the first i distinct times
};

}  // namespace

Bytes neighboring_distance(const Stream& a, const Stream& b, Nanos W, Nanos T) {
  const auto k = buckets_per_window(W, T);
  DifferenceProfile diff(a, b);
  Bytes best = 0;
  for (Nanos t : diff.times()) {
    for (std::int64_t j = 0; j <= k; ++j) {
      const Nanos start = t - j * T;
      Bytes l1 = 0;
      Bytes lo = diff.before(start);
      for (std::int64_t bucket = 1; bucket <= k; ++bucket) {
        Bytes hi = diff.before(start + bucket * T);
        l1 += std::llabs(hi - lo);
        lo = hi;
      }
      best = std::max(best, l1);
    }
  }
  return best;
}

Bytes nearest_rank(std::span<const Bytes> sorted, int percent) {
  if (sorted.empty()) fail(ErrorKind::Usage, "percentile of empty sample");
  const auto n = static_cast<std::int64_t>(sorted.size());
  std::int64_t rank = (percent * n + 99) / 100;
  rank = std::clamp<std::int64_t>(rank, 1, n);
  return sorted[static_cast<std::size_t>(rank - 1)];
}

DistanceTable pairwise_distance_distribution(std::span<const Stream> streams, Nanos W, Nanos T) {
  if (streams.size() < 2) fail(ErrorKind::Usage, "need at least 2 streams");
  buckets_per_window(W, T);
  DistanceTable table;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    for (std::size_t j = i + 1; j < streams.size(); ++j) {
      table.distances.push_back(neighboring_distance(streams[i], streams[j], W, T));
    }
  }
  std::sort(table.distances.begin(), table.distances.end());
  table.p50 = nearest_rank(table.distances, 50);
  table.p90 = nearest_rank(table.distances, 90);
  table.p99 = nearest_rank(table.distances, 99);
  table.max = table.distances.back();
  return table;
}

}  // namespace netshaper::traces
