#pragma once

#include <deque>
#include <map>
#include <memory>
#include <vector>

#include "common/types.hpp"

namespace netshaper::shaping {

struct Span {
  Nanos enqueue_time = 0;
  Bytes remaining = 0;
  FlowId flow_id = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

// A run of bytes removed from a queue, in removal order.
struct Taken {
  FlowId flow_id = 0;
  Bytes bytes = 0;
  Nanos enqueue_time = 0;
  friend bool operator==(const Taken&, const Taken&) = default;
};

// FIFO of timestamped byte spans with a TTL flush. Bytes enqueued at t are
// flushed once now - t > W; a span aged exactly W survives.
class BufferingQueue {
 public:
  explicit BufferingQueue(Bytes capacity = kUnbounded) : capacity_(capacity) {}

  // Returns false (and changes nothing) if the capacity bound would be
  // exceeded. Throws Validation for n < 1 or a timestamp older than the tail.
  [[nodiscard]] bool enqueue(FlowId flow, Bytes n, Nanos now);

  // Removes up to n bytes from the head; appends the removed runs to `out`.
  Bytes dequeue(Bytes n, std::vector<Taken>* out = nullptr);

  // Removes every byte with enqueue_time < now - W; appends removed runs to
  // `dropped` when given. Returns the byte count removed.
  Bytes flush_expired(Nanos now, Nanos W, std::vector<Taken>* dropped = nullptr);

  Bytes size() const { return total_len_; }
  bool empty() const { return spans_.empty(); }
  Bytes capacity() const { return capacity_; }
  const std::deque<Span>& spans() const { return spans_; }
  Nanos head_time() const { return spans_.front().enqueue_time; }

 private:
  std::deque<Span> spans_;
  Bytes total_len_ = 0;
  Bytes capacity_;
};

// Chooses which non-empty queue supplies the next span during a dequeue.
class DequeuePolicy {
 public:
  virtual ~DequeuePolicy() = default;
  // `queues` has at least one non-empty entry.
  virtual FlowId pick(const std::map<FlowId, BufferingQueue>& queues) const = 0;
};

// Global oldest-first; ties go to the lower flow id.
class OldestFirst final : public DequeuePolicy {
 public:
  FlowId pick(const std::map<FlowId, BufferingQueue>& queues) const override;
};

// Lowest flow id first, regardless of age.
class StrictFlowPriority final : public DequeuePolicy {
 public:
  FlowId pick(const std::map<FlowId, BufferingQueue>& queues) const override;
};

// Per-flow queues served as one buffering queue.
class QueueSet {
 public:
  explicit QueueSet(Bytes per_flow_capacity = kUnbounded,
                    std::shared_ptr<const DequeuePolicy> policy = nullptr);

  [[nodiscard]] bool enqueue(FlowId flow, Bytes n, Nanos now);
  Bytes flush_expired(Nanos now, Nanos W, std::vector<Taken>* dropped = nullptr);
  // Dequeues up to n bytes across flows following the policy.
  Bytes dequeue(Bytes n, std::vector<Taken>* out);

  Bytes total() const { return total_; }
  const std::map<FlowId, BufferingQueue>& queues() const { return queues_; }
  BufferingQueue* find(FlowId flow);
  void erase(FlowId flow);

 private:
  std::map<FlowId, BufferingQueue> queues_;
  Bytes per_flow_capacity_;
  std::shared_ptr<const DequeuePolicy> policy_;
  Bytes total_ = 0;
};

}  // namespace netshaper::shaping
