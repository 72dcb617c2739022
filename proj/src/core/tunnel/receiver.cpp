#include "tunnel/receiver.hpp"

#include "common/log.hpp"

namespace netshaper::tunnel {

Receiver::Receiver(Role local_role, FramingConfig framing, std::unique_ptr<Cipher> cipher,
                   ReceiverOptions opts)
    : role_(local_role), framing_(framing), cipher_(std::move(cipher)), opts_(opts) {}

bool Receiver::is_local_id(FlowId id) const {
  return ((id & kServeFlowBit) != 0) == (role_ == Role::Serve);
}

RxEvents Receiver::process_record(std::span<const std::uint8_t> record, Nanos now) {
  ++stats_.records;
  auto frames = open_record(record, *cipher_, seq_++);
  if (!frames) {
    ++stats_.integrity_failures;
    logger()->warn("record failed integrity check; dropped");
    return {};
  }
  return process_frames(*frames, now);
}

ByteVec Receiver::accept(Reassembly& r, std::uint64_t offset, const ByteVec& body) {
  ByteVec out;
  const std::uint64_t end = offset + body.size();
  if (end <= r.next_offset) return out;  // duplicate
  if (offset > r.next_offset) {
    auto& slot = r.ahead[offset];
    if (slot.size() < body.size()) slot = body;
    return out;
  }
  out.assign(body.begin() + static_cast<std::ptrdiff_t>(r.next_offset - offset), body.end());
  r.next_offset = end;
  while (!r.ahead.empty() && r.ahead.begin()->first <= r.next_offset) {
    auto node = r.ahead.extract(r.ahead.begin());
    const std::uint64_t nend = node.key() + node.mapped().size();
    if (nend > r.next_offset) {
      out.insert(out.end(), node.mapped().begin() + static_cast<std::ptrdiff_t>(r.next_offset - node.key()),
                 node.mapped().end());
      r.next_offset = nend;
    }
  }
  return out;
}

RxEvents Receiver::process_frames(const std::vector<Frame>& frames, Nanos now) {
  RxEvents ev;
  for (const Frame& f : frames) {
    switch (f.kind) {
      case FrameKind::Dummy:
        stats_.dummy_bytes += f.dummy_len;
        break;
      case FrameKind::Control: {
        stats_.control_bytes += f.body.size();
        auto bytes = accept(control_rx_, f.offset, f.body);
        control_decoder_.feed(bytes);
        while (auto m = control_decoder_.next()) on_control(*m, ev);
        break;
      }
      case FrameKind::Data:
        if (flows_.count(f.flow_id) || is_local_id(f.flow_id) || !opts_.require_registration) {
          on_data(f, ev);
        } else {
          auto& p = pending_[f.flow_id];
          if (p.frames.empty()) p.first_seen = now;
          p.frames.push_back(f);
        }
        break;
    }
  }
  return ev;
}

void Receiver::on_data(const Frame& f, RxEvents& ev) {
  auto& r = flows_[f.flow_id];
  auto bytes = accept(r, f.offset, f.body);
  stats_.payload_bytes += f.body.size();
  if (!bytes.empty()) {
    if (!ev.data.empty() && ev.data.back().flow_id == f.flow_id) {
      ev.data.back().bytes.insert(ev.data.back().bytes.end(), bytes.begin(), bytes.end());
    } else {
      ev.data.push_back({f.flow_id, std::move(bytes)});
    }
  }
  check_finished(f.flow_id, ev);
}

void Receiver::check_finished(FlowId id, RxEvents& ev) {
  auto it = flows_.find(id);
  if (it == flows_.end() || !it->second.final_offset) return;
  if (it->second.next_offset >= *it->second.final_offset) {
    ev.finished.push_back(id);
    flows_.erase(it);
  }
}

void Receiver::on_control(const ControlMessage& m, RxEvents& ev) {
  ev.control.push_back(m);
  switch (m.type) {
    case ControlType::Open: {
      flows_[m.flow_id] = Reassembly{};
      auto p = pending_.find(m.flow_id);
      if (p != pending_.end()) {
        auto frames = std::move(p->second.frames);
        pending_.erase(p);
        for (const auto& f : frames) on_data(f, ev);
      }
      break;
    }
    case ControlType::Fin:
      flows_[m.flow_id].final_offset = fin_offset(m);
      check_finished(m.flow_id, ev);
      break;
    case ControlType::Reset:
      flows_.erase(m.flow_id);
      pending_.erase(m.flow_id);
      break;
    case ControlType::Bye:
      break;
  }
}

void Receiver::expire_pending(Nanos now) {
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (now - it->second.first_seen > opts_.pending_timeout) {
      for (const auto& f : it->second.frames) stats_.dropped_unknown_bytes += f.body.size();
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }
}

}  // namespace netshaper::tunnel
