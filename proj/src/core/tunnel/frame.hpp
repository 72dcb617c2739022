#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "common/types.hpp"
#include "tunnel/wire_bytes.hpp"

namespace netshaper::tunnel {

enum class FrameKind : std::uint8_t { Data = 0, Dummy = 1, Control = 2 };

// [1 kind][4 flow_id][8 offset][4 length][body], big-endian.
inline constexpr std::size_t kFrameHeaderSize = 17;

struct Frame {
  FrameKind kind = FrameKind::Data;
  FlowId flow_id = 0;
  std::uint64_t offset = 0;
  // DUMMY frames carry `dummy_len` zero bytes and leave `body` empty.
  ByteVec body;
  std::uint32_t dummy_len = 0;

  std::uint32_t length() const {
    return kind == FrameKind::Dummy ? dummy_len : static_cast<std::uint32_t>(body.size());
  }

  friend bool operator==(const Frame&, const Frame&) = default;
};

void write_frame_header(ByteVec& out, FrameKind kind, FlowId flow, std::uint64_t offset,
                        std::uint32_t length);

struct FrameHeader {
  FrameKind kind;
  FlowId flow_id;
  std::uint64_t offset;
  std::uint32_t length;
};

// Nullopt for an unknown kind byte.
std::optional<FrameHeader> read_frame_header(std::span<const std::uint8_t> in);

// Everything one interval puts on the wire, before record sealing: CONTROL,
// then DATA (one frame per flow), then at most one DUMMY frame. Body bytes
// sum to dp_len.
struct TickContent {
  std::uint64_t interval = 0;
  std::uint32_t dp_len = 0;
  std::vector<Frame> frames;

  std::uint64_t body_bytes() const;
  std::uint64_t payload_bytes() const;  // DATA + CONTROL
  std::uint64_t dummy_bytes() const;
};

}  // namespace netshaper::tunnel
