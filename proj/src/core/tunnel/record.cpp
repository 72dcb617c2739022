#include "tunnel/record.hpp"

#include <algorithm>
#include <cstring>

#include <sodium.h>

#include "common/error.hpp"

namespace netshaper::tunnel {

void FramingConfig::validate() const {
  if (mtu < kMinMtu) fail(ErrorKind::Config, "mtu must be >= " + std::to_string(kMinMtu));
  if (mtu > (1u << 24)) fail(ErrorKind::Config, "mtu too large");
  if (flows_max < 1) fail(ErrorKind::Config, "flows_max must be >= 1");
}

std::vector<std::size_t> tick_layout(std::uint32_t dp_len, const FramingConfig& cfg) {
  if (dp_len == 0) return {};
  const std::size_t cap = cfg.plaintext_capacity();
  const std::size_t base = static_cast<std::size_t>(dp_len) + cfg.tick_reserve();
  const std::size_t per_record = cap - kRecordReserve;
  const std::size_t n = (base + per_record - 1) / per_record;
  const std::size_t total = base + kRecordReserve * n;
  std::vector<std::size_t> sizes(n, cap);
  sizes.back() = total - (n - 1) * cap;
  return sizes;
}

std::uint64_t tick_wire_bytes(std::uint32_t dp_len, const FramingConfig& cfg) {
  std::uint64_t total = 0;
  for (auto s : tick_layout(dp_len, cfg)) total += kRecordHeaderSize + s + kTagSize;
  return total;
}

ByteVec NullCipher::seal(std::uint64_t, std::span<const std::uint8_t>,
                         std::span<const std::uint8_t> plaintext) {
  ByteVec out(plaintext.begin(), plaintext.end());
  out.resize(out.size() + kTagSize, 0);
  return out;
}

std::optional<ByteVec> NullCipher::open(std::uint64_t, std::span<const std::uint8_t>,
                                        std::span<const std::uint8_t> sealed) {
  if (sealed.size() < kTagSize) return std::nullopt;
  auto tag = sealed.last(kTagSize);
  if (std::any_of(tag.begin(), tag.end(), [](std::uint8_t b) { return b != 0; })) return std::nullopt;
  return ByteVec(sealed.begin(), sealed.end() - kTagSize);
}

namespace {

std::array<std::uint8_t, crypto_aead_chacha20poly1305_IETF_NPUBBYTES> make_nonce(std::uint64_t seq) {
  std::array<std::uint8_t, crypto_aead_chacha20poly1305_IETF_NPUBBYTES> nonce{};
  for (int i = 0; i < 8; ++i) nonce[nonce.size() - 1 - static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(seq >> (8 * i));
  return nonce;
}

}  // namespace

ChaChaPolyCipher::ChaChaPolyCipher(std::span<const std::uint8_t, 32> key) {
  if (sodium_init() < 0) fail(ErrorKind::Session, "libsodium initialisation failed");
  std::copy(key.begin(), key.end(), key_.begin());
}

ChaChaPolyCipher::~ChaChaPolyCipher() { sodium_memzero(key_.data(), key_.size()); }

ByteVec ChaChaPolyCipher::seal(std::uint64_t seq, std::span<const std::uint8_t> ad,
                               std::span<const std::uint8_t> plaintext) {
  ByteVec out(plaintext.size() + kTagSize);
  unsigned long long out_len = 0;
  auto nonce = make_nonce(seq);
  crypto_aead_chacha20poly1305_ietf_encrypt(out.data(), &out_len, plaintext.data(), plaintext.size(),
                                            ad.data(), ad.size(), nullptr, nonce.data(), key_.data());
  out.resize(out_len);
  return out;
}

std::optional<ByteVec> ChaChaPolyCipher::open(std::uint64_t seq, std::span<const std::uint8_t> ad,
                                              std::span<const std::uint8_t> sealed) {
  if (sealed.size() < kTagSize) return std::nullopt;
  ByteVec out(sealed.size() - kTagSize);
  unsigned long long out_len = 0;
  auto nonce = make_nonce(seq);
  if (crypto_aead_chacha20poly1305_ietf_decrypt(out.data(), &out_len, nullptr, sealed.data(), sealed.size(),
                                                ad.data(), ad.size(), nonce.data(), key_.data()) != 0) {
    return std::nullopt;
  }
  out.resize(out_len);
  return out;
}

std::vector<ByteVec> encode_frames(const TickContent& tick, const FramingConfig& cfg, Cipher& cipher,
                                   std::uint64_t& seq) {
  if (tick.body_bytes() != tick.dp_len) fail(ErrorKind::Validation, "frame bodies must sum to dp_len");
  const auto sizes = tick_layout(tick.dp_len, cfg);

  std::size_t frame_idx = 0;
  std::uint32_t consumed = 0;  // body bytes of frames[frame_idx] already written
  std::vector<ByteVec> records;
  records.reserve(sizes.size());

  for (std::size_t r = 0; r < sizes.size(); ++r) {
    const std::size_t size = sizes[r];
    ByteVec plain;
    plain.reserve(size);
    put_u32(plain, 0);  // used length, patched below
    while (frame_idx < tick.frames.size() && size - plain.size() >= kFrameHeaderSize + 1) {
      const Frame& f = tick.frames[frame_idx];
      const std::uint32_t left = f.length() - consumed;
      const auto chunk = static_cast<std::uint32_t>(
          std::min<std::size_t>(left, size - plain.size() - kFrameHeaderSize));
      write_frame_header(plain, f.kind, f.flow_id, f.offset + consumed, chunk);
      if (f.kind == FrameKind::Dummy) {
        plain.resize(plain.size() + chunk, 0);
      } else {
        plain.insert(plain.end(), f.body.begin() + consumed, f.body.begin() + consumed + chunk);
      }
      consumed += chunk;
      if (consumed == f.length()) {
        ++frame_idx;
        consumed = 0;
      }
    }
    const auto used = static_cast<std::uint32_t>(plain.size() - 4);
    plain[0] = static_cast<std::uint8_t>(used >> 24);
    plain[1] = static_cast<std::uint8_t>(used >> 16);
    plain[2] = static_cast<std::uint8_t>(used >> 8);
    plain[3] = static_cast<std::uint8_t>(used);
    plain.resize(size, 0);

    ByteVec record;
    record.reserve(kRecordHeaderSize + size + kTagSize);
    record.insert(record.end(), kRecordMagic.begin(), kRecordMagic.end());
    put_u64(record, tick.interval);
    put_u32(record, tick.dp_len);
    auto sealed = cipher.seal(seq++, std::span(record.data(), kRecordHeaderSize), plain);
    record.insert(record.end(), sealed.begin(), sealed.end());
    records.push_back(std::move(record));
  }
  if (frame_idx != tick.frames.size()) {
    // The layout reserve guarantees this cannot happen for <= flows_max + 2 frames.
    fail(ErrorKind::Capacity, "tick has more frames than the framing reserve allows");
  }
  return records;
}

std::optional<RecordHeader> read_record_header(std::span<const std::uint8_t> record) {
  if (record.size() < kRecordHeaderSize) return std::nullopt;
  if (!std::equal(kRecordMagic.begin(), kRecordMagic.end(), record.begin())) return std::nullopt;
  return RecordHeader{get_u64(record.subspan(4)), get_u32(record.subspan(12))};
}

std::optional<std::vector<Frame>> open_record(std::span<const std::uint8_t> record, Cipher& cipher,
                                              std::uint64_t seq) {
  if (!read_record_header(record)) return std::nullopt;
  auto plain = cipher.open(seq, record.first(kRecordHeaderSize), record.subspan(kRecordHeaderSize));
  if (!plain || plain->size() < 4) return std::nullopt;
  const std::span<const std::uint8_t> p(*plain);
  const std::uint32_t used = get_u32(p);
  if (used > p.size() - 4) return std::nullopt;
  auto frames_bytes = p.subspan(4, used);

  std::vector<Frame> frames;
  std::size_t pos = 0;
  while (pos < frames_bytes.size()) {
    if (frames_bytes.size() - pos < kFrameHeaderSize) return std::nullopt;
    auto hdr = read_frame_header(frames_bytes.subspan(pos));
    if (!hdr) return std::nullopt;
    pos += kFrameHeaderSize;
    if (frames_bytes.size() - pos < hdr->length) return std::nullopt;
    Frame f{hdr->kind, hdr->flow_id, hdr->offset, {}, 0};
    if (hdr->kind == FrameKind::Dummy) {
      f.dummy_len = hdr->length;
    } else {
      f.body.assign(frames_bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    frames_bytes.begin() + static_cast<std::ptrdiff_t>(pos + hdr->length));
    }
    pos += hdr->length;
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<ByteVec> RecordStreamParser::feed(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
  std::vector<ByteVec> out;
  std::size_t pos = 0;
  while (true) {
    if (buffer_.size() - pos < kRecordHeaderSize) break;
    auto header = read_record_header(std::span(buffer_).subspan(pos));
    if (!header) fail(ErrorKind::Session, "record stream out of sync (bad magic)");
    if (pending_sizes_.empty()) {
      if (header->dp_len == 0) fail(ErrorKind::Session, "record with dp_len 0");
      auto sizes = tick_layout(header->dp_len, cfg_);
      pending_sizes_.assign(sizes.begin(), sizes.end());
    }
    const std::size_t need = kRecordHeaderSize + pending_sizes_.front() + kTagSize;
    if (buffer_.size() - pos < need) break;
    out.emplace_back(buffer_.begin() + static_cast<std::ptrdiff_t>(pos),
                     buffer_.begin() + static_cast<std::ptrdiff_t>(pos + need));
    pos += need;
    pending_sizes_.pop_front();
  }
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
  return out;
}

}  // namespace netshaper::tunnel
