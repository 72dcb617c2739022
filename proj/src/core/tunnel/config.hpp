#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>

#include "dpcore/params.hpp"
#include "tunnel/record.hpp"
#include "tunnel/schedule.hpp"

namespace netshaper::tunnel {

enum class CipherKind : std::uint8_t { ChaCha20Poly1305, Null };

// Endpoint configuration, read from a key=value file ('#' starts a comment).
//
// Required: psk_hex, T_ms, W_ms, delta_w_bytes, epsilon, delta, cutoff_bytes,
// flows_max, plus listen_addr (serve: tunnel listener; connect: application
// listener) and peer_addr (connect only).
// Optional: T_prep_ms (6), T_enq_ms (1), mtu (1400), cipher
// (chacha20poly1305 | null), seed (random), sigma_bytes (calibrated),
// idle_timeout_ms (0 = none), queue_bytes (4 MiB), app_listen_addr (serve
// only), connect_timeout_ms (2000).
struct TunnelConfig {
  std::string listen_addr;
  std::string peer_addr;
  std::string app_listen_addr;
  std::array<std::uint8_t, 32> psk{};
  dpcore::DpParams params;
  PrepareSchedule schedule;
  FramingConfig framing;
  CipherKind cipher = CipherKind::ChaCha20Poly1305;
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma;
  Nanos idle_timeout = 0;
  Bytes queue_bytes = 4 << 20;
  Nanos connect_timeout = millis(2000);

  // Noise standard deviation: sigma_bytes if given, otherwise calibrated so
  // the W/T queries of one window compose to (epsilon, delta).
  double noise_sigma() const;

  // Parameters both endpoints must agree on, in a fixed textual form.
  std::string canonical_params() const;
};

// Throws Config on unknown keys, malformed values or missing required keys;
// ParseError for lines without '='.
TunnelConfig parse_tunnel_config(std::istream& in);
TunnelConfig load_tunnel_config(const std::string& path);

}  // namespace netshaper::tunnel
