#include "tunnel/session.hpp"

#include "common/error.hpp"

namespace netshaper::tunnel {

const char* to_string(SessionState s) noexcept {
  switch (s) {
    case SessionState::Establishing: return "establishing";
    case SessionState::Active: return "active";
    case SessionState::Closing: return "closing";
    case SessionState::Closed: return "closed";
  }
  return "unknown";
}

Session::Session(std::uint32_t flows_max, Role role, Nanos idle_timeout)
    : flows_(flows_max, role), idle_timeout_(idle_timeout) {}

void Session::established(Nanos now) {
  if (state_ != SessionState::Establishing) fail(ErrorKind::Session, "session already established");
  state_ = SessionState::Active;
  last_activity_ = now;
}

void Session::activity(Nanos now) {
  if (now > last_activity_) last_activity_ = now;
}

std::vector<FlowId> Session::begin_close() {
  if (state_ == SessionState::Closed) fail(ErrorKind::Session, "session already closed");
  std::vector<FlowId> ids;
  for (const auto& [id, e] : flows_.entries()) ids.push_back(id);
  for (auto id : ids) flows_.release(id);
  state_ = SessionState::Closing;
  return ids;
}

void Session::closed() {
  if (state_ != SessionState::Closed) begin_close();
  state_ = SessionState::Closed;
}

bool Session::idle_expired(Nanos now) const {
  return state_ == SessionState::Active && idle_timeout_ > 0 && now - last_activity_ > idle_timeout_;
}

}  // namespace netshaper::tunnel
