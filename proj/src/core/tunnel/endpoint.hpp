#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "tunnel/config.hpp"
#include "tunnel/flow_map.hpp"

namespace netshaper::tunnel {

// One line of the per-interval wire log.
struct TickLog {
  std::int64_t k = 0;
  std::uint32_t dp_len = 0;
  std::uint64_t payload = 0;  // DATA + CONTROL body bytes
  std::uint64_t dummy = 0;
  std::uint64_t wire_bytes = 0;
  Nanos handoff_offset = 0;  // handoff time minus kT
};

struct EndpointStats {
  std::uint64_t sessions = 0;
  std::uint64_t ticks = 0;
  std::uint64_t prepare_overruns = 0;
  std::uint64_t handoff_overruns = 0;
  std::uint64_t records_tx = 0;
  std::uint64_t wire_bytes_tx = 0;
  std::uint64_t integrity_failures = 0;
  std::uint64_t dummy_bytes_rx = 0;
  std::uint64_t flows_opened = 0;
  std::uint64_t flows_rejected = 0;
  std::uint64_t ttl_drop_bytes = 0;
};

// A tunnel endpoint with the three-context model: the application side
// (run()'s thread) owns app sockets and the flow table and produces into the
// queues; the Prepare thread consumes the queues on the fixed schedule; the
// wire workers transmit handed-off ticks and process inbound records.
class Endpoint {
 public:
  Endpoint(TunnelConfig cfg, Role role);
  ~Endpoint();
  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  // Called from the transmit worker after each tick is written.
  void set_tick_callback(std::function<void(const TickLog&)> cb);

  // Opens the listeners; run() does this when needed. Ports are known after.
  void bind();
  std::uint16_t tunnel_port() const;  // serve role
  std::uint16_t app_port() const;     // 0 without an application listener

  // Establishes sessions (retrying with backoff) until stop() is called.
  void run();
  // Async-signal-safe: sets a flag and writes to an eventfd.
  void stop() noexcept;

  bool session_active() const;
  EndpointStats stats() const;
  std::string last_error() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace netshaper::tunnel
