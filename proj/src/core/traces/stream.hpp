#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "common/types.hpp"

namespace netshaper::traces {

enum class Direction : std::uint8_t { Inbound, Outbound };

struct PacketRecord {
  Nanos t = 0;
  Bytes len = 1;
  FlowId flow_id = 0;
  Direction dir = Direction::Outbound;

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

// Timestamp-ordered packet sequence. Construction sorts (stably) and
// validates every record.
class Stream {
 public:
  Stream() = default;
  explicit Stream(std::vector<PacketRecord> records);

  std::span<const PacketRecord> records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // max t - min t, zero for fewer than two records.
  Nanos duration() const;
  Bytes total_bytes() const;
  Nanos first_time() const;
  Nanos last_time() const;

  Stream filter(Direction dir) const;

  friend bool operator==(const Stream&, const Stream&) = default;

 private:
  std::vector<PacketRecord> records_;
};

struct BurstVector {
  Nanos origin = 0;
  Nanos interval = 0;
  std::vector<Bytes> values;

  Bytes total() const;
  friend bool operator==(const BurstVector&, const BurstVector&) = default;
};

// Number of T-buckets in a window of length W. Throws Config unless W is a
// positive multiple of T.
std::int64_t buckets_per_window(Nanos W, Nanos T);

// Byte counts of `s` in the k = W/T consecutive buckets
// [t_w + jT, t_w + (j+1)T).
BurstVector windowed_repr(const Stream& s, Nanos t_w, Nanos W, Nanos T);

// Same as windowed_repr but without the t_w >= 0 restriction; used where
// windows may start before the stream does.
BurstVector windowed_repr_unchecked(const Stream& s, Nanos t_w, Nanos W, Nanos T);

}  // namespace netshaper::traces
