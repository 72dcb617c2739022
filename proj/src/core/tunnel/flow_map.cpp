#include "tunnel/flow_map.hpp"

#include "common/error.hpp"

namespace netshaper::tunnel {

FlowMap::FlowMap(std::uint32_t flows_max, Role role) : flows_max_(flows_max), role_(role) {
  if (flows_max < 1 || flows_max >= kServeFlowBit) fail(ErrorKind::Config, "flows_max out of range");
}

FlowId FlowMap::id_for_slot(Role initiator, std::uint32_t slot) {
  return initiator == Role::Connect ? slot : (kServeFlowBit | slot);
}

bool FlowMap::is_local_id(FlowId id) const {
  return ((id & kServeFlowBit) != 0) == (role_ == Role::Serve);
}

std::optional<FlowId> FlowMap::allocate(std::string app_endpoint) {
  if (entries_.size() >= flows_max_) return std::nullopt;
  for (std::uint32_t slot = 1; slot <= flows_max_; ++slot) {
    const FlowId id = id_for_slot(role_, slot);
    if (entries_.count(id)) continue;
    FlowMapEntry e;
    e.flow_id = id;
    e.app_endpoint = std::move(app_endpoint);
    e.state = StreamState::Active;
    e.initiated_locally = true;
    entries_.emplace(id, std::move(e));
    return id;
  }
  return std::nullopt;
}

bool FlowMap::register_remote(FlowId id, std::string app_endpoint) {
  const std::uint32_t slot = id & ~kServeFlowBit;
  if (is_local_id(id) || slot < 1 || slot > flows_max_) return false;
  if (entries_.size() >= flows_max_ || entries_.count(id)) return false;
  FlowMapEntry e;
  e.flow_id = id;
  e.app_endpoint = std::move(app_endpoint);
  e.state = StreamState::Active;
  entries_.emplace(id, std::move(e));
  return true;
}

FlowMapEntry* FlowMap::find(FlowId id) {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

const FlowMapEntry* FlowMap::find(FlowId id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

bool FlowMap::mark_fin_sent(FlowId id) {
  auto* e = find(id);
  if (!e) return false;
  e->fin_sent = true;
  e->state = StreamState::Closing;
  return maybe_release(id);
}

bool FlowMap::mark_fin_received(FlowId id) {
  auto* e = find(id);
  if (!e) return false;
  e->fin_received = true;
  e->state = StreamState::Closing;
  return maybe_release(id);
}

void FlowMap::release(FlowId id) { entries_.erase(id); }

bool FlowMap::maybe_release(FlowId id) {
  auto* e = find(id);
  if (e && e->fin_sent && e->fin_received) {
    entries_.erase(id);
    return true;
  }
  return false;
}

}  // namespace netshaper::tunnel
