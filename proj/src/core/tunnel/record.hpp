#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "tunnel/frame.hpp"

namespace netshaper::tunnel {

// Wire record: [4 "NSH1"][8 interval][4 dp_len][sealed block], big-endian.
// The sealed block opens to [4 used][frames ... (used bytes)][zero padding].
inline constexpr std::array<std::uint8_t, 4> kRecordMagic{'N', 'S', 'H', '1'};
inline constexpr std::size_t kRecordHeaderSize = 16;
inline constexpr std::size_t kTagSize = 16;
// Per record: used-length prefix, one header for a frame split at the record
// boundary, and up to 17 bytes of unusable tail.
inline constexpr std::size_t kRecordReserve = 4 + kFrameHeaderSize + kFrameHeaderSize;
inline constexpr std::size_t kMinMtu = 128;

struct FramingConfig {
  std::size_t mtu = 1400;
  std::uint32_t flows_max = 128;

  void validate() const;
  // Header space reserved per tick: one frame per flow plus CONTROL and DUMMY.
  std::size_t tick_reserve() const { return kFrameHeaderSize * (static_cast<std::size_t>(flows_max) + 2); }
  std::size_t plaintext_capacity() const { return mtu - kRecordHeaderSize - kTagSize; }
};

// Plaintext size of each record of one tick. Depends only on dp_len and the
// framing configuration, never on how dp_len splits into payload and dummy.
std::vector<std::size_t> tick_layout(std::uint32_t dp_len, const FramingConfig& cfg);

// Total bytes a tick puts on the wire: dp_len + tick_reserve + 70 per record.
std::uint64_t tick_wire_bytes(std::uint32_t dp_len, const FramingConfig& cfg);

class Cipher {
 public:
  virtual ~Cipher() = default;
  // Returns plaintext.size() + kTagSize bytes.
  virtual ByteVec seal(std::uint64_t seq, std::span<const std::uint8_t> ad,
                       std::span<const std::uint8_t> plaintext) = 0;
  virtual std::optional<ByteVec> open(std::uint64_t seq, std::span<const std::uint8_t> ad,
                                      std::span<const std::uint8_t> sealed) = 0;
};

// No confidentiality: appends an all-zero tag and checks it on open.
class NullCipher final : public Cipher {
 public:
  ByteVec seal(std::uint64_t, std::span<const std::uint8_t>, std::span<const std::uint8_t> plaintext) override;
  std::optional<ByteVec> open(std::uint64_t, std::span<const std::uint8_t>,
                              std::span<const std::uint8_t> sealed) override;
};

// ChaCha20-Poly1305 (IETF); the 96-bit nonce is the big-endian record
// sequence number of the direction.
class ChaChaPolyCipher final : public Cipher {
 public:
  explicit ChaChaPolyCipher(std::span<const std::uint8_t, 32> key);
  ~ChaChaPolyCipher() override;

  ByteVec seal(std::uint64_t seq, std::span<const std::uint8_t> ad,
               std::span<const std::uint8_t> plaintext) override;
  std::optional<ByteVec> open(std::uint64_t seq, std::span<const std::uint8_t> ad,
                              std::span<const std::uint8_t> sealed) override;

 private:
  std::array<std::uint8_t, 32> key_;
};

// Splits the tick's frames over records and seals them; `seq` is the
// direction's record counter and advances by the number of records.
std::vector<ByteVec> encode_frames(const TickContent& tick, const FramingConfig& cfg, Cipher& cipher,
                                   std::uint64_t& seq);

struct RecordHeader {
  std::uint64_t interval = 0;
  std::uint32_t dp_len = 0;
};

std::optional<RecordHeader> read_record_header(std::span<const std::uint8_t> record);

// Opens one record; nullopt on authentication failure or malformed content.
std::optional<std::vector<Frame>> open_record(std::span<const std::uint8_t> record, Cipher& cipher,
                                              std::uint64_t seq);

// Cuts a byte stream into whole records using the deterministic layout.
class RecordStreamParser {
 public:
  explicit RecordStreamParser(FramingConfig cfg) : cfg_(cfg) {}

  // Throws Session on a bad magic or an impossible header.
  std::vector<ByteVec> feed(std::span<const std::uint8_t> bytes);
  std::size_t buffered() const { return buffer_.size(); }

 private:
  FramingConfig cfg_;
  ByteVec buffer_;
  std::deque<std::size_t> pending_sizes_;  // remaining records of the current tick
};

}  // namespace netshaper::tunnel
