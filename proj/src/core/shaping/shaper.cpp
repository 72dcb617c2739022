#include "shaping/shaper.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/error.hpp"

namespace netshaper::shaping {

Bytes ShapedBuffer::payload_bytes() const {
  return std::accumulate(payload.begin(), payload.end(), Bytes{0},
                         [](Bytes acc, const Taken& t) { return acc + t.bytes; });
}

std::map<FlowId, Bytes> ShapedBuffer::payload_by_flow() const {
  std::map<FlowId, Bytes> out;
  for (const auto& t : payload) out[t.flow_id] += t.bytes;
  return out;
}

Bytes dp_query(Bytes q_len, const dpcore::DpParams& p, double sigma, dpcore::NoiseSource& rng) {
  const double z = dpcore::sample_gaussian(sigma, rng);
  double noisy = static_cast<double>(q_len) + z;
  noisy = std::clamp(noisy, 0.0, static_cast<double>(p.cutoff));
  const double rounded = std::floor(noisy + 0.5);
  return std::min(static_cast<Bytes>(rounded), p.cutoff);
}

ShapedBuffer prepare_shaped_buffer(QueueSet& queues, Bytes dp_len, Nanos now) {
  if (dp_len < 0) fail(ErrorKind::Validation, "dp_len must be >= 0");
  ShapedBuffer buf;
  buf.emit_time = now;
  buf.queue_len = queues.total();
  buf.dp_len = dp_len;
  const Bytes taken = queues.dequeue(dp_len, &buf.payload);
  buf.dummy = dp_len - taken;
  return buf;
}

ShapedBuffer shaping_step(ShapingState& state, const dpcore::DpParams& p, double sigma, Nanos now,
                          dpcore::NoiseSource& rng) {
  if (p.T <= 0) fail(ErrorKind::Validation, "T must be > 0");
  const Nanos offset = now - state.origin;
  if (offset % p.T != 0) fail(ErrorKind::Scheduling, "shaping step off the interval grid");
  const std::int64_t k = offset / p.T;
  if (state.last_interval) {
    if (k <= *state.last_interval) {
      fail(ErrorKind::Scheduling, "interval " + std::to_string(k) + " already shaped");
    }
    if (k != *state.last_interval + 1) {
      fail(ErrorKind::Scheduling, "interval " + std::to_string(*state.last_interval + 1) + " skipped");
    }
  }
  state.last_interval = k;

  state.last_dropped.clear();
  const Bytes drops = state.queues.flush_expired(now, p.W, &state.last_dropped);
  const Bytes dp_len = dp_query(state.queues.total(), p, sigma, rng);
  ShapedBuffer buf = prepare_shaped_buffer(state.queues, dp_len, now);
  buf.interval_index = k;
  buf.drops = drops;
  return buf;
}

}  // namespace netshaper::shaping
