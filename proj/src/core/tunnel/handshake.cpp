#include "tunnel/handshake.hpp"

#include <cstring>

#include <sodium.h>

#include "common/error.hpp"
#include "tunnel/socket.hpp"

namespace netshaper::tunnel {

namespace {

constexpr std::array<std::uint8_t, 4> kHelloMagic{'N', 'S', 'H', 'H'};
constexpr std::size_t kHelloFixed = 4 + 2 + 1 + 16 + 2;
constexpr std::size_t kMacSize = crypto_auth_hmacsha256_BYTES;

void ensure_sodium() {
  if (sodium_init() < 0) fail(ErrorKind::Session, "libsodium initialisation failed");
}

std::array<std::uint8_t, kMacSize> hmac(const Key& psk, std::span<const std::uint8_t> msg) {
  std::array<std::uint8_t, kMacSize> mac{};
  crypto_auth_hmacsha256(mac.data(), msg.data(), msg.size(), psk.data());
  return mac;
}

std::array<std::uint8_t, kMacSize> confirm_mac(const Key& psk, Role sender, const Nonce& nc, const Nonce& ns) {
  ByteVec msg{'c', 'o', 'n', 'f', 'i', 'r', 'm'};
  msg.push_back(static_cast<std::uint8_t>(sender));
  msg.insert(msg.end(), nc.begin(), nc.end());
  msg.insert(msg.end(), ns.begin(), ns.end());
  return hmac(psk, msg);
}

}  // namespace

ByteVec encode_hello(const Hello& h, const Key& psk) {
  ensure_sodium();
  if (h.params.size() > 0xFFFF) fail(ErrorKind::Config, "parameter string too long");
  ByteVec out(kHelloMagic.begin(), kHelloMagic.end());
  put_u16(out, kHandshakeVersion);
  put_u8(out, static_cast<std::uint8_t>(h.role));
  out.insert(out.end(), h.nonce.begin(), h.nonce.end());
  put_u16(out, static_cast<std::uint16_t>(h.params.size()));
  out.insert(out.end(), h.params.begin(), h.params.end());
  const auto mac = hmac(psk, out);
  out.insert(out.end(), mac.begin(), mac.end());
  return out;
}

Hello read_hello(int fd, const Key& psk, Nanos timeout) {
  ensure_sodium();
  ByteVec msg(kHelloFixed);
  read_exact(fd, msg, timeout);
  if (!std::equal(kHelloMagic.begin(), kHelloMagic.end(), msg.begin())) {
    fail(ErrorKind::Session, "peer is not a tunnel endpoint (bad handshake magic)");
  }
  if (get_u16(std::span(msg).subspan(4)) != kHandshakeVersion) fail(ErrorKind::Session, "unsupported handshake version");
  const std::uint16_t plen = get_u16(std::span(msg).subspan(kHelloFixed - 2));
  msg.resize(kHelloFixed + plen + kMacSize);
  read_exact(fd, std::span(msg).subspan(kHelloFixed), timeout);

  const auto body = std::span<const std::uint8_t>(msg).first(kHelloFixed + plen);
  const auto expect = hmac(psk, body);
  if (crypto_verify_32(expect.data(), msg.data() + kHelloFixed + plen) != 0) {
    fail(ErrorKind::Auth, "handshake authentication failed (pre-shared key mismatch?)");
  }
  Hello h;
  const std::uint8_t role = msg[6];
  if (role > 1) fail(ErrorKind::Session, "bad role in handshake");
  h.role = static_cast<Role>(role);
  std::copy(msg.begin() + 7, msg.begin() + 23, h.nonce.begin());
  h.params.assign(reinterpret_cast<const char*>(msg.data() + kHelloFixed), plen);
  return h;
}

SessionKeys derive_keys(const Key& psk, Role local, const Nonce& connect_nonce, const Nonce& serve_nonce) {
  ensure_sodium();
  auto derive = [&](const char* label) {
    Key out{};
    ByteVec in(label, label + std::strlen(label));
    in.insert(in.end(), connect_nonce.begin(), connect_nonce.end());
    in.insert(in.end(), serve_nonce.begin(), serve_nonce.end());
    crypto_generichash(out.data(), out.size(), in.data(), in.size(), psk.data(), psk.size());
    return out;
  };
  const Key c2s = derive("netshaper c2s");
  const Key s2c = derive("netshaper s2c");
  return local == Role::Connect ? SessionKeys{c2s, s2c} : SessionKeys{s2c, c2s};
}

SessionKeys perform_handshake(int fd, const TunnelConfig& cfg, Role role, Nanos timeout) {
  ensure_sodium();
  Hello mine;
  mine.role = role;
  randombytes_buf(mine.nonce.data(), mine.nonce.size());
  mine.params = cfg.canonical_params();
  write_all(fd, encode_hello(mine, cfg.psk));

  const Hello peer = read_hello(fd, cfg.psk, timeout);
  if (peer.role == role) fail(ErrorKind::Session, "both endpoints use the same role");
  if (peer.params != mine.params) {
    fail(ErrorKind::ParameterMismatch, "peer parameters differ: local {" + mine.params + "} peer {" + peer.params + "}");
  }
  const Nonce& nc = role == Role::Connect ? mine.nonce : peer.nonce;
  const Nonce& ns = role == Role::Connect ? peer.nonce : mine.nonce;

  const auto my_confirm = confirm_mac(cfg.psk, role, nc, ns);
  write_all(fd, my_confirm);
  std::array<std::uint8_t, kMacSize> theirs{};
  read_exact(fd, theirs, timeout);
  const auto expect = confirm_mac(cfg.psk, peer.role, nc, ns);
  if (crypto_verify_32(expect.data(), theirs.data()) != 0) fail(ErrorKind::Auth, "handshake confirmation failed");
  return derive_keys(cfg.psk, role, nc, ns);
}

}  // namespace netshaper::tunnel
