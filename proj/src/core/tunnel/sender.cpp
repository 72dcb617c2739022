#include "tunnel/sender.hpp"

#include "common/error.hpp"

namespace netshaper::tunnel {

TxQueues::TxQueues(dpcore::DpParams params, double sigma, Bytes per_flow_capacity,
                   std::unique_ptr<dpcore::NoiseSource> noise)
    : params_(params), sigma_(sigma), noise_(std::move(noise)), state_(0, per_flow_capacity) {
  params_.validate();
  if (params_.cutoff > std::numeric_limits<std::uint32_t>::max()) {
    fail(ErrorKind::Config, "cutoff must fit in 32 bits for the tunnel");
  }
}

bool TxQueues::push(FlowId flow, std::span<const std::uint8_t> bytes, Nanos now) {
  if (bytes.empty()) return true;
  std::lock_guard lock(mu_);
  if (!state_.queues.enqueue(flow, static_cast<Bytes>(bytes.size()), now)) return false;
  auto& fb = data_[flow];
  fb.bytes.insert(fb.bytes.end(), bytes.begin(), bytes.end());
  return true;
}

void TxQueues::erase(FlowId flow) {
  std::lock_guard lock(mu_);
  state_.queues.erase(flow);
  data_.erase(flow);
}

Bytes TxQueues::queued(FlowId flow) const {
  std::lock_guard lock(mu_);
  auto it = data_.find(flow);
  return it == data_.end() ? 0 : static_cast<Bytes>(it->second.bytes.size());
}

Bytes TxQueues::total_queued() const {
  std::lock_guard lock(mu_);
  return state_.queues.total();
}

TickOutput TxQueues::step(std::int64_t k) {
  std::lock_guard lock(mu_);
  TickOutput out;
  out.shaped = shaping::shaping_step(state_, params_, sigma_, k * params_.T, *noise_);

  // Expired bytes sit at the head of their flow's byte queue.
  for (const auto& d : state_.last_dropped) {
    auto& fb = data_.at(d.flow_id);
    fb.bytes.erase(fb.bytes.begin(), fb.bytes.begin() + d.bytes);
    fb.next_offset += static_cast<std::uint64_t>(d.bytes);
    out.drops[d.flow_id] += d.bytes;
  }

  std::map<FlowId, Frame> by_flow;
  for (const auto& t : out.shaped.payload) {
    auto& fb = data_.at(t.flow_id);
    auto [it, fresh] = by_flow.try_emplace(t.flow_id);
    Frame& f = it->second;
    if (fresh) {
      f.kind = t.flow_id == kControlQueue ? FrameKind::Control : FrameKind::Data;
      f.flow_id = t.flow_id;
      f.offset = fb.next_offset;
    }
    f.body.insert(f.body.end(), fb.bytes.begin(), fb.bytes.begin() + t.bytes);
    fb.bytes.erase(fb.bytes.begin(), fb.bytes.begin() + t.bytes);
    fb.next_offset += static_cast<std::uint64_t>(t.bytes);
  }

  out.content.interval = static_cast<std::uint64_t>(k);
  out.content.dp_len = static_cast<std::uint32_t>(out.shaped.dp_len);
  for (auto& [id, f] : by_flow) out.content.frames.push_back(std::move(f));  // key 0 sorts first
  if (out.shaped.dummy > 0) {
    Frame d;
    d.kind = FrameKind::Dummy;
    d.dummy_len = static_cast<std::uint32_t>(out.shaped.dummy);
    out.content.frames.push_back(std::move(d));
  }
  return out;
}

}  // namespace netshaper::tunnel
