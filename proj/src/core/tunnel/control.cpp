#include "tunnel/control.hpp"

#include "common/error.hpp"

namespace netshaper::tunnel {

ByteVec encode_control(const ControlMessage& msg) {
  ByteVec out;
  out.reserve(kControlHeaderSize + msg.payload.size());
  put_u8(out, static_cast<std::uint8_t>(msg.type));
  put_u32(out, msg.flow_id);
  put_u32(out, static_cast<std::uint32_t>(msg.payload.size()));
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

ControlMessage make_fin(FlowId flow, std::uint64_t final_offset) {
  ControlMessage m{ControlType::Fin, flow, {}};
  put_u64(m.payload, final_offset);
  return m;
}

std::uint64_t fin_offset(const ControlMessage& fin) {
  if (fin.type != ControlType::Fin || fin.payload.size() != 8) fail(ErrorKind::Session, "malformed FIN");
  return get_u64(fin.payload);
}

void ControlDecoder::feed(std::span<const std::uint8_t> bytes) {
  if (pos_ > 0 && pos_ == buffer_.size()) {
    buffer_.clear();
    pos_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<ControlMessage> ControlDecoder::next() {
  const std::span<const std::uint8_t> rest = std::span(buffer_).subspan(pos_);
  if (rest.size() < kControlHeaderSize) return std::nullopt;
  const std::uint8_t type = rest[0];
  if (type < 1 || type > 4) fail(ErrorKind::Session, "unknown control message type " + std::to_string(type));
  const std::uint32_t len = get_u32(rest.subspan(5));
  if (len > kMaxControlPayload) fail(ErrorKind::Session, "control payload too large");
  if (rest.size() < kControlHeaderSize + len) return std::nullopt;
  ControlMessage m{static_cast<ControlType>(type), get_u32(rest.subspan(1)),
                   ByteVec(rest.begin() + kControlHeaderSize, rest.begin() + kControlHeaderSize + len)};
  pos_ += kControlHeaderSize + len;
  return m;
}

}  // namespace netshaper::tunnel
