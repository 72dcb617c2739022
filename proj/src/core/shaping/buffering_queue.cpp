#include "shaping/buffering_queue.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace netshaper::shaping {

bool BufferingQueue::enqueue(FlowId flow, Bytes n, Nanos now) {
  if (n < 1) fail(ErrorKind::Validation, "enqueue size must be >= 1");
  if (!spans_.empty() && now < spans_.back().enqueue_time) {
    fail(ErrorKind::Validation, "enqueue timestamps must be non-decreasing");
  }
  if (n > capacity_ - total_len_) return false;
  spans_.push_back({now, n, flow});
  total_len_ += n;
  return true;
}

Bytes BufferingQueue::dequeue(Bytes n, std::vector<Taken>* out) {
  Bytes taken = 0;
  while (taken < n && !spans_.empty()) {
    Span& head = spans_.front();
    Bytes chunk = std::min(head.remaining, n - taken);
    if (out) out->push_back({head.flow_id, chunk, head.enqueue_time});
    head.remaining -= chunk;
    taken += chunk;
    if (head.remaining == 0) spans_.pop_front();
  }
  total_len_ -= taken;
  return taken;
}

Bytes BufferingQueue::flush_expired(Nanos now, Nanos W, std::vector<Taken>* dropped) {
  Bytes removed = 0;
  while (!spans_.empty() && spans_.front().enqueue_time < now - W) {
    const Span& head = spans_.front();
    if (dropped) dropped->push_back({head.flow_id, head.remaining, head.enqueue_time});
    removed += head.remaining;
    spans_.pop_front();
  }
  total_len_ -= removed;
  return removed;
}

FlowId OldestFirst::pick(const std::map<FlowId, BufferingQueue>& queues) const {
  const BufferingQueue* best = nullptr;
  FlowId best_id = 0;
  for (const auto& [id, q] : queues) {
    if (q.empty()) continue;
    if (best == nullptr || q.head_time() < best->head_time()) {
      best = &q;
      best_id = id;
    }
  }
  return best_id;
}

FlowId StrictFlowPriority::pick(const std::map<FlowId, BufferingQueue>& queues) const {
  for (const auto& [id, q] : queues) {
    if (!q.empty()) return id;
  }
  return 0;
}

QueueSet::QueueSet(Bytes per_flow_capacity, std::shared_ptr<const DequeuePolicy> policy)
    : per_flow_capacity_(per_flow_capacity),
      policy_(policy ? std::move(policy) : std::make_shared<OldestFirst>()) {}

bool QueueSet::enqueue(FlowId flow, Bytes n, Nanos now) {
  auto [it, _] = queues_.try_emplace(flow, per_flow_capacity_);
  if (!it->second.enqueue(flow, n, now)) return false;
  total_ += n;
  return true;
}

Bytes QueueSet::flush_expired(Nanos now, Nanos W, std::vector<Taken>* dropped) {
  Bytes removed = 0;
  for (auto& [id, q] : queues_) removed += q.flush_expired(now, W, dropped);
  total_ -= removed;
  return removed;
}

Bytes QueueSet::dequeue(Bytes n, std::vector<Taken>* out) {
  Bytes taken = 0;
  while (taken < n && total_ - taken > 0) {
    BufferingQueue& q = queues_.at(policy_->pick(queues_));
    // One head span at a time so that the policy is re-consulted between spans.
    Bytes chunk = std::min(q.spans().front().remaining, n - taken);
    taken += q.dequeue(chunk, out);
  }
  total_ -= taken;
  return taken;
}

BufferingQueue* QueueSet::find(FlowId flow) {
  auto it = queues_.find(flow);
  return it == queues_.end() ? nullptr : &it->second;
}

void QueueSet::erase(FlowId flow) {
  auto it = queues_.find(flow);
  if (it == queues_.end()) return;
  total_ -= it->second.size();
  queues_.erase(it);
}

}  // namespace netshaper::shaping
