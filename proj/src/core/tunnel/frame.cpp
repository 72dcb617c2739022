#include "tunnel/frame.hpp"

namespace netshaper::tunnel {

void write_frame_header(ByteVec& out, FrameKind kind, FlowId flow, std::uint64_t offset,
                        std::uint32_t length) {
  put_u8(out, static_cast<std::uint8_t>(kind));
  put_u32(out, flow);
  put_u64(out, offset);
  put_u32(out, length);
}

std::optional<FrameHeader> read_frame_header(std::span<const std::uint8_t> in) {
  const std::uint8_t kind = in[0];
  if (kind > static_cast<std::uint8_t>(FrameKind::Control)) return std::nullopt;
  return FrameHeader{static_cast<FrameKind>(kind), get_u32(in.subspan(1)), get_u64(in.subspan(5)),
                     get_u32(in.subspan(13))};
}

std::uint64_t TickContent::body_bytes() const {
  std::uint64_t n = 0;
  for (const auto& f : frames) n += f.length();
  return n;
}

std::uint64_t TickContent::payload_bytes() const {
  std::uint64_t n = 0;
  for (const auto& f : frames) {
    if (f.kind != FrameKind::Dummy) n += f.length();
  }
  return n;
}

std::uint64_t TickContent::dummy_bytes() const { return body_bytes() - payload_bytes(); }

}  // namespace netshaper::tunnel
