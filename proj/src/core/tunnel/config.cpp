#include "tunnel/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <spdlog/fmt/fmt.h>

#include "common/error.hpp"
#include "dpcore/accountant.hpp"

namespace netshaper::tunnel {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(x)) fail(ErrorKind::Config, key + ": not a number: '" + v + "'");
  return x;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) fail(ErrorKind::Config, key + ": not an integer: '" + v + "'");
  return x;
}

Nanos to_nanos_ms(const std::string& key, const std::string& v) {
  const double ms = to_double(key, v);
  if (ms < 0) fail(ErrorKind::Config, key + " must be >= 0");
  return static_cast<Nanos>(std::llround(ms * static_cast<double>(kNanosPerMilli)));
}

std::array<std::uint8_t, 32> parse_psk(const std::string& hex) {
  std::array<std::uint8_t, 32> key{};
  if (hex.size() != 64) fail(ErrorKind::Config, "psk_hex must be 64 hex characters");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < 32; ++i) {
    const int hi = nibble(hex[2 * i]);
    const int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) fail(ErrorKind::Config, "psk_hex must be 64 hex characters");
    key[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return key;
}

const std::set<std::string> kRequired = {"psk_hex", "T_ms", "W_ms", "delta_w_bytes", "epsilon",
                                         "delta", "cutoff_bytes", "flows_max", "listen_addr"};

}  // namespace

double TunnelConfig::noise_sigma() const {
  if (sigma) return *sigma;
  return dpcore::sigma_for_budget(static_cast<double>(params.delta_w), params.epsilon, params.delta,
                                  params.queries_per_window());
}

std::string TunnelConfig::canonical_params() const {
  return fmt::format("T_ns={};W_ns={};delta_w={};epsilon={:.17g};delta={:.17g};cutoff={};mtu={};flows_max={};cipher={}",
                     params.T, params.W, params.delta_w, params.epsilon, params.delta, params.cutoff,
                     framing.mtu, framing.flows_max, cipher == CipherKind::Null ? "null" : "chacha20poly1305");
}

TunnelConfig parse_tunnel_config(std::istream& in) {
  TunnelConfig cfg;
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (kv.count(key)) throw ParseError(lineno, "duplicate key '" + key + "'");
    kv[key] = trim(line.substr(eq + 1));
  }
  for (const auto& k : kRequired) {
    if (!kv.count(k)) fail(ErrorKind::Config, "missing required key '" + k + "'");
  }

  for (const auto& [key, v] : kv) {
    if (key == "listen_addr") cfg.listen_addr = v;
    else if (key == "peer_addr") cfg.peer_addr = v;
    else if (key == "app_listen_addr") cfg.app_listen_addr = v;
    else if (key == "psk_hex") cfg.psk = parse_psk(v);
    else if (key == "T_ms") cfg.params.T = cfg.schedule.T = to_nanos_ms(key, v);
    else if (key == "T_prep_ms") cfg.schedule.T_prep = to_nanos_ms(key, v);
    else if (key == "T_enq_ms") cfg.schedule.T_enq = to_nanos_ms(key, v);
    else if (key == "W_ms") cfg.params.W = to_nanos_ms(key, v);
    else if (key == "delta_w_bytes") cfg.params.delta_w = to_int(key, v);
    else if (key == "epsilon") cfg.params.epsilon = to_double(key, v);
    else if (key == "delta") cfg.params.delta = to_double(key, v);
    else if (key == "cutoff_bytes") cfg.params.cutoff = to_int(key, v);
    else if (key == "flows_max") {
      const auto n = to_int(key, v);
      if (n < 1 || n > 65535) fail(ErrorKind::Config, "flows_max must be in [1, 65535]");
      cfg.framing.flows_max = static_cast<std::uint32_t>(n);
    } else if (key == "mtu") {
      const auto n = to_int(key, v);
      if (n < 0) fail(ErrorKind::Config, "mtu must be positive");
      cfg.framing.mtu = static_cast<std::size_t>(n);
    } else if (key == "cipher") {
      if (v == "chacha20poly1305") cfg.cipher = CipherKind::ChaCha20Poly1305;
      else if (v == "null") cfg.cipher = CipherKind::Null;
      else fail(ErrorKind::Config, "cipher must be chacha20poly1305 or null");
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(to_int(key, v));
    } else if (key == "sigma_bytes") {
      const double s = to_double(key, v);
      if (s < 0) fail(ErrorKind::Config, "sigma_bytes must be >= 0");
      cfg.sigma = s;
    } else if (key == "idle_timeout_ms") cfg.idle_timeout = to_nanos_ms(key, v);
    else if (key == "queue_bytes") {
      cfg.queue_bytes = to_int(key, v);
      if (cfg.queue_bytes < 1) fail(ErrorKind::Config, "queue_bytes must be >= 1");
    } else if (key == "connect_timeout_ms") cfg.connect_timeout = to_nanos_ms(key, v);
    else fail(ErrorKind::Config, "unknown key '" + key + "'");
  }

  if (cfg.params.cutoff < 1 || cfg.params.cutoff > (Bytes{1} << 30)) {
    fail(ErrorKind::Config, "cutoff_bytes must be in [1, 2^30]");
  }
  try {
    cfg.params.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  cfg.schedule.validate();
  cfg.framing.validate();
  return cfg;
}

TunnelConfig load_tunnel_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config file '" + path + "'");
  return parse_tunnel_config(in);
}

}  // namespace netshaper::tunnel
