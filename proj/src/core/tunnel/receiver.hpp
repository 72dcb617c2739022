#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "tunnel/control.hpp"
#include "tunnel/flow_map.hpp"
#include "tunnel/record.hpp"

namespace netshaper::tunnel {

struct ReceiverOptions {
  // DATA for a flow the peer has not opened waits in a pending buffer (and
  // is dropped after pending_timeout) instead of being delivered.
  bool require_registration = true;
  Nanos pending_timeout = 5 * kNanosPerSecond;
};

struct ReceiverStats {
  std::uint64_t records = 0;
  std::uint64_t integrity_failures = 0;
  std::uint64_t dummy_bytes = 0;
  std::uint64_t payload_bytes = 0;
  std::uint64_t control_bytes = 0;
  std::uint64_t dropped_unknown_bytes = 0;
};

struct Delivery {
  FlowId flow_id = 0;
  ByteVec bytes;
};

struct RxEvents {
  std::vector<Delivery> data;            // in-order bytes per flow
  std::vector<ControlMessage> control;   // every decoded control message
  std::vector<FlowId> finished;          // peer side complete up to its FIN offset

  bool empty() const { return data.empty() && control.empty() && finished.empty(); }
};

// Inbound processing for one direction: opens records, discards DUMMY,
// reassembles DATA per flow by offset, and decodes the CONTROL stream.
class Receiver {
 public:
  Receiver(Role local_role, FramingConfig framing, std::unique_ptr<Cipher> cipher,
           ReceiverOptions opts = {});

  // A record that fails authentication is dropped and counted.
  RxEvents process_record(std::span<const std::uint8_t> record, Nanos now);
  RxEvents process_frames(const std::vector<Frame>& frames, Nanos now);
  void expire_pending(Nanos now);

  const ReceiverStats& stats() const { return stats_; }
  std::size_t pending_flows() const { return pending_.size(); }

 private:
  struct Reassembly {
    std::uint64_t next_offset = 0;
    std::map<std::uint64_t, ByteVec> ahead;
    std::optional<std::uint64_t> final_offset;
  };
  struct Pending {
    Nanos first_seen = 0;
    std::vector<Frame> frames;
  };

  // Returns newly contiguous bytes.
  static ByteVec accept(Reassembly& r, std::uint64_t offset, const ByteVec& body);
  void on_data(const Frame& f, RxEvents& ev);
  void on_control(const ControlMessage& m, RxEvents& ev);
  void check_finished(FlowId id, RxEvents& ev);
  bool is_local_id(FlowId id) const;

  Role role_;
  FramingConfig framing_;
  std::unique_ptr<Cipher> cipher_;
  ReceiverOptions opts_;
  std::uint64_t seq_ = 0;
  ReceiverStats stats_;
  Reassembly control_rx_;
  ControlDecoder control_decoder_;
  std::map<FlowId, Reassembly> flows_;
  std::map<FlowId, Pending> pending_;
};

}  // namespace netshaper::tunnel
