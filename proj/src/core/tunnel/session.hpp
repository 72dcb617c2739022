#pragma once

#include <cstdint>
#include <vector>

#include "tunnel/flow_map.hpp"

namespace netshaper::tunnel {

enum class SessionState : std::uint8_t { Establishing, Active, Closing, Closed };

const char* to_string(SessionState s) noexcept;

// Session lifecycle plus the flow table. Establishing -> Active -> Closing
// -> Closed; any state may jump to Closed on a transport failure.
class Session {
 public:
  Session(std::uint32_t flows_max, Role role, Nanos idle_timeout);

  SessionState state() const { return state_; }
  FlowMap& flows() { return flows_; }
  const FlowMap& flows() const { return flows_; }

  void established(Nanos now);   // Establishing -> Active
  void activity(Nanos now);      // application bytes moved in either direction
  // Active -> Closing; closes every flow and returns the ids that were open.
  std::vector<FlowId> begin_close();
  void closed();                 // -> Closed

  // True when Active and no activity for longer than idle_timeout (0 = never).
  bool idle_expired(Nanos now) const;

 private:
  SessionState state_ = SessionState::Establishing;
  FlowMap flows_;
  Nanos idle_timeout_;
  Nanos last_activity_ = 0;
};

}  // namespace netshaper::tunnel
