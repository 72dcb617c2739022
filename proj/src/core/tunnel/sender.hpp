#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "dpcore/gaussian.hpp"
#include "dpcore/params.hpp"
#include "shaping/shaper.hpp"
#include "tunnel/record.hpp"

namespace netshaper::tunnel {

// The CONTROL stream is queued under this key, next to the data flows.
inline constexpr FlowId kControlQueue = 0;

struct TickOutput {
  TickContent content;
  shaping::ShapedBuffer shaped;
  std::map<FlowId, Bytes> drops;  // TTL drops per queue key, this tick
};

// Outbound queues of one endpoint: the shaping state plus the bytes behind
// each queued span. Producers (application side) push; the Prepare context
// calls step() once per interval. All members are guarded by one mutex.
class TxQueues {
 public:
  TxQueues(dpcore::DpParams params, double sigma, Bytes per_flow_capacity,
           std::unique_ptr<dpcore::NoiseSource> noise);

  // `now` is nanoseconds since the session origin. Returns false without
  // queuing anything when the flow's bound would be exceeded.
  [[nodiscard]] bool push(FlowId flow, std::span<const std::uint8_t> bytes, Nanos now);
  [[nodiscard]] bool push_control(const ByteVec& encoded, Nanos now) {
    return push(kControlQueue, encoded, now);
  }
  // Discards everything queued for the flow and forgets its offsets.
  void erase(FlowId flow);

  Bytes queued(FlowId flow) const;
  Bytes total_queued() const;

  // Runs the shaping step for interval k (now = kT) and builds the frames:
  // CONTROL, then one DATA frame per flow in id order, then DUMMY.
  TickOutput step(std::int64_t k);

  const dpcore::DpParams& params() const { return params_; }
  double sigma() const { return sigma_; }

 private:
  struct FlowBytes {
    std::deque<std::uint8_t> bytes;
    std::uint64_t next_offset = 0;  // stream offset of bytes.front()
  };

  mutable std::mutex mu_;
  dpcore::DpParams params_;
  double sigma_;
  std::unique_ptr<dpcore::NoiseSource> noise_;
  shaping::ShapingState state_;
  std::map<FlowId, FlowBytes> data_;
};

// Seals tick content into wire records for one direction.
class TunnelSender {
 public:
  TunnelSender(FramingConfig framing, std::unique_ptr<Cipher> cipher)
      : framing_(framing), cipher_(std::move(cipher)) {}

  std::vector<ByteVec> seal(const TickContent& tick) { return encode_frames(tick, framing_, *cipher_, seq_); }
  std::uint64_t records_sent() const { return seq_; }

 private:
  FramingConfig framing_;
  std::unique_ptr<Cipher> cipher_;
  std::uint64_t seq_ = 0;
};

}  // namespace netshaper::tunnel
