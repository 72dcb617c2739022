#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "common/types.hpp"

namespace netshaper::tunnel {

enum class Role : std::uint8_t { Serve, Connect };

enum class StreamState : std::uint8_t { Idle, Active, Closing };

struct FlowMapEntry {
  FlowId flow_id = 0;
  std::string app_endpoint;
  StreamState state = StreamState::Idle;
  bool initiated_locally = false;
  bool fin_sent = false;
  bool fin_received = false;
  bool reset_sent = false;
  // Recorded at registration only; the tunnel has a single budget.
  std::optional<std::string> privacy_descriptor;
};

// Flows initiated by the connect side use ids 1..flows_max; flows initiated
// by the serve side use 0x80000000 | slot.
inline constexpr FlowId kServeFlowBit = 0x80000000u;

class FlowMap {
 public:
  FlowMap(std::uint32_t flows_max, Role role);

  static FlowId id_for_slot(Role initiator, std::uint32_t slot);
  bool is_local_id(FlowId id) const;

  // Lowest free local slot; nullopt when the map is full.
  std::optional<FlowId> allocate(std::string app_endpoint);
  // Registers a flow opened by the peer. False when full, already in use,
  // or the id is outside the peer's range.
  bool register_remote(FlowId id, std::string app_endpoint);

  FlowMapEntry* find(FlowId id);
  const FlowMapEntry* find(FlowId id) const;

  // Each returns true when the flow became fully closed and was released.
  bool mark_fin_sent(FlowId id);
  bool mark_fin_received(FlowId id);
  void release(FlowId id);

  std::size_t size() const { return entries_.size(); }
  std::uint32_t capacity() const { return flows_max_; }
  const std::map<FlowId, FlowMapEntry>& entries() const { return entries_; }

 private:
  bool maybe_release(FlowId id);

  std::uint32_t flows_max_;
  Role role_;
  std::map<FlowId, FlowMapEntry> entries_;
};

}  // namespace netshaper::tunnel
