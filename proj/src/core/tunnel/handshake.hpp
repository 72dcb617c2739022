#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "tunnel/config.hpp"
#include "tunnel/flow_map.hpp"
#include "tunnel/wire_bytes.hpp"

namespace netshaper::tunnel {

// Session setup over the freshly connected transport, before any record:
//   HELLO   = "NSHH" u16 version, u8 role, 16-byte nonce, u16 len, params,
//             HMAC-SHA256(psk, everything before)
//   CONFIRM = HMAC-SHA256(psk, "confirm" | role | nonce_connect | nonce_serve)
// Both sides send HELLO, check the peer's MAC (Auth), role and parameter
// string (ParameterMismatch), then exchange CONFIRM. Direction keys are
// keyed BLAKE2b over a label and both nonces.
inline constexpr std::uint16_t kHandshakeVersion = 1;
using Nonce = std::array<std::uint8_t, 16>;
using Key = std::array<std::uint8_t, 32>;

struct Hello {
  Role role = Role::Connect;
  Nonce nonce{};
  std::string params;
};

ByteVec encode_hello(const Hello& h, const Key& psk);
// Reads one HELLO from a connected socket; throws Auth on a bad MAC.
Hello read_hello(int fd, const Key& psk, Nanos timeout);

struct SessionKeys {
  Key tx{};
  Key rx{};
};

SessionKeys derive_keys(const Key& psk, Role local, const Nonce& connect_nonce, const Nonce& serve_nonce);

// Runs the whole exchange; throws Auth, ParameterMismatch, Session or Io.
SessionKeys perform_handshake(int fd, const TunnelConfig& cfg, Role role, Nanos timeout);

}  // namespace netshaper::tunnel
