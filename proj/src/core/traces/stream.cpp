#include "traces/stream.hpp"

#include <algorithm>
#include <numeric>

#include "common/error.hpp"

namespace netshaper::traces {

Stream::Stream(std::vector<PacketRecord> records) : records_(std::move(records)) {
  for (const auto& r : records_) {
    if (r.len < 1) fail(ErrorKind::Validation, "packet length must be >= 1");
    if (r.t < 0) fail(ErrorKind::Validation, "timestamp must be >= 0");
  }
  std::stable_sort(records_.begin(), records_.end(),
                   [](const PacketRecord& a, const PacketRecord& b) { return a.t < b.t; });
}

Nanos Stream::duration() const {
  if (records_.empty()) return 0;
  return records_.back().t - records_.front().t;
}

Bytes Stream::total_bytes() const {
  return std::accumulate(records_.begin(), records_.end(), Bytes{0},
                         [](Bytes acc, const PacketRecord& r) { return acc + r.len; });
}

Nanos Stream::first_time() const { return records_.empty() ? 0 : records_.front().t; }
Nanos Stream::last_time() const { return records_.empty() ? 0 : records_.back().t; }

Stream Stream::filter(Direction dir) const {
  std::vector<PacketRecord> out;
  std::copy_if(records_.begin(), records_.end(), std::back_inserter(out),
               [dir](const PacketRecord& r) { return r.dir == dir; });
  return Stream(std::move(out));
}

Bytes BurstVector::total() const {
  return std::accumulate(values.begin(), values.end(), Bytes{0});
}

std::int64_t buckets_per_window(Nanos W, Nanos T) {
  if (T <= 0) fail(ErrorKind::Config, "T must be positive");
  if (W <= 0) fail(ErrorKind::Config, "W must be positive");
  if (W % T != 0) fail(ErrorKind::Config, "W must be a multiple of T");
  return W / T;
}

BurstVector windowed_repr_unchecked(const Stream& s, Nanos t_w, Nanos W, Nanos T) {
  const auto k = buckets_per_window(W, T);
  BurstVector out{t_w, T, std::vector<Bytes>(static_cast<std::size_t>(k), 0)};
  auto recs = s.records();
  auto it = std::lower_bound(recs.begin(), recs.end(), t_w,
                             [](const PacketRecord& r, Nanos t) { return r.t < t; });
  const Nanos end = t_w + W;
  for (; it != recs.end() && it->t < end; ++it) {
    out.values[static_cast<std::size_t>((it->t - t_w) / T)] += it->len;
  }
  return out;
}

BurstVector windowed_repr(const Stream& s, Nanos t_w, Nanos W, Nanos T) {
  if (t_w < 0) fail(ErrorKind::Validation, "window start must be >= 0");
  return windowed_repr_unchecked(s, t_w, W, T);
}

}  // namespace netshaper::traces
