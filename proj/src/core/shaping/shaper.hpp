#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "dpcore/gaussian.hpp"
#include "dpcore/params.hpp"
#include "shaping/buffering_queue.hpp"

namespace netshaper::shaping {

// Output of one shaping interval: dp_len bytes on the wire, of which the
// payload runs are application bytes and the rest is dummy.
struct ShapedBuffer {
  std::int64_t interval_index = 0;
  Nanos emit_time = 0;
  Bytes queue_len = 0;  // queue length seen by the DP query (after the flush)
  Bytes dp_len = 0;
  std::vector<Taken> payload;
  Bytes dummy = 0;
  Bytes drops = 0;  // bytes flushed by the TTL at the start of this interval

  Bytes payload_bytes() const;
  std::map<FlowId, Bytes> payload_by_flow() const;

  friend bool operator==(const ShapedBuffer&, const ShapedBuffer&) = default;
};

// round_half_up(clamp(q_len + z, 0, cutoff)) with z ~ N(0, sigma^2).
Bytes dp_query(Bytes q_len, const dpcore::DpParams& p, double sigma, dpcore::NoiseSource& rng);

// Dequeues min(dp_len, queued) bytes following the queue set's policy and
// pads the rest with dummy.
ShapedBuffer prepare_shaped_buffer(QueueSet& queues, Bytes dp_len, Nanos now);

struct ShapingState {
  explicit ShapingState(Nanos origin_ = 0, Bytes per_flow_capacity = kUnbounded,
                        std::shared_ptr<const DequeuePolicy> policy = nullptr)
      : queues(per_flow_capacity, std::move(policy)), origin(origin_) {}

  QueueSet queues;
  Nanos origin = 0;
  std::optional<std::int64_t> last_interval;
  std::vector<Taken> last_dropped;  // runs flushed by the most recent step
};

// One interval boundary at now = origin + kT, in this order: TTL flush,
// DP query on the remaining queue length, dequeue + pad. Throws Scheduling
// when `now` is off-grid or not the interval right after the previous call.
ShapedBuffer shaping_step(ShapingState& state, const dpcore::DpParams& p, double sigma, Nanos now,
                          dpcore::NoiseSource& rng);

}  // namespace netshaper::shaping
