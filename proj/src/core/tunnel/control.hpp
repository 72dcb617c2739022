#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "common/types.hpp"
#include "tunnel/wire_bytes.hpp"

namespace netshaper::tunnel {

// Messages carried on the CONTROL stream: [1 type][4 flow_id][4 len][payload].
enum class ControlType : std::uint8_t {
  Open = 1,   // payload: the registration JSON line
  Fin = 2,    // payload: u64 final byte offset of the sender's side of the flow
  Reset = 3,  // no payload; answered once by the peer, then the slot is free
  Bye = 4,    // session close
};

struct ControlMessage {
  ControlType type = ControlType::Open;
  FlowId flow_id = 0;
  ByteVec payload;

  friend bool operator==(const ControlMessage&, const ControlMessage&) = default;
};

inline constexpr std::size_t kControlHeaderSize = 9;
inline constexpr std::uint32_t kMaxControlPayload = 64 * 1024;

ByteVec encode_control(const ControlMessage& msg);

ControlMessage make_fin(FlowId flow, std::uint64_t final_offset);
std::uint64_t fin_offset(const ControlMessage& fin);

// Reassembles messages from the in-order CONTROL byte stream.
class ControlDecoder {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  // Throws Session on an unknown type or an oversized payload.
  std::optional<ControlMessage> next();

 private:
  ByteVec buffer_;
  std::size_t pos_ = 0;
};

}  // namespace netshaper::tunnel
