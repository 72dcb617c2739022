#include "tunnel/endpoint.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include <json.hpp>
#include <sodium.h>

#include "common/error.hpp"
#include "common/log.hpp"
#include "tunnel/control.hpp"
#include "tunnel/handshake.hpp"
#include "tunnel/receiver.hpp"
#include "tunnel/schedule.hpp"
#include "tunnel/sender.hpp"
#include "tunnel/session.hpp"
#include "tunnel/socket.hpp"

namespace netshaper::tunnel {

namespace {

constexpr std::size_t kMaxRegistrationLine = 4096;
constexpr std::size_t kReadChunk = 64 * 1024;

std::unique_ptr<Cipher> make_cipher(CipherKind kind, const Key& key) {
  if (kind == CipherKind::Null) return std::make_unique<NullCipher>();
  return std::make_unique<ChaChaPolyCipher>(std::span<const std::uint8_t, 32>(key));
}

struct Registration {
  std::string dst_host;
  std::uint16_t dst_port = 0;
  std::optional<std::string> privacy_descriptor;
};

// Throws Validation with a message suitable for the application.
Registration parse_registration(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Validation, "registration is not valid JSON");
  }
  if (!j.is_object()) fail(ErrorKind::Validation, "registration must be a JSON object");
  Registration r;
  if (!j.contains("dst_host") || !j["dst_host"].is_string()) fail(ErrorKind::Validation, "dst_host missing");
  if (!j.contains("dst_port") || !j["dst_port"].is_number_integer()) fail(ErrorKind::Validation, "dst_port missing");
  const auto port = j["dst_port"].get<std::int64_t>();
  if (port < 1 || port > 65535) fail(ErrorKind::Validation, "dst_port out of range");
  if (j.contains("reliability")) {
    if (!j["reliability"].is_boolean()) fail(ErrorKind::Validation, "reliability must be a boolean");
    if (!j["reliability"].get<bool>()) fail(ErrorKind::Validation, "reliability=false is not supported");
  }
  r.dst_host = j["dst_host"].get<std::string>();
  r.dst_port = static_cast<std::uint16_t>(port);
  if (j.contains("privacy_descriptor")) r.privacy_descriptor = j["privacy_descriptor"].dump();
  return r;
}

}  // namespace

struct Endpoint::Impl {
  TunnelConfig cfg;
  Role role;
  std::function<void(const TickLog&)> on_tick;

  Fd tunnel_listener;
  Fd app_listener;
  Waker waker;
  std::atomic<bool> stop_requested{false};
  std::atomic<bool> active{false};
  mutable std::mutex err_mu;
  std::string last_error;

  std::atomic<std::uint64_t> sessions{0}, ticks{0}, prep_over{0}, handoff_over{0}, records_tx{0},
      wire_tx{0}, integrity{0}, dummy_rx{0}, opened{0}, rejected{0}, drop_bytes{0};

  Impl(TunnelConfig c, Role r) : cfg(std::move(c)), role(r) {}

  void set_error(const std::string& e) {
    std::lock_guard lock(err_mu);
    last_error = e;
  }

  void bind() {
    if (role == Role::Serve && !tunnel_listener) {
      tunnel_listener = listen_tcp(parse_host_port(cfg.listen_addr));
    }
    const std::string app_addr = role == Role::Connect ? cfg.listen_addr : cfg.app_listen_addr;
    if (!app_addr.empty() && !app_listener) {
      app_listener = listen_tcp(parse_host_port(app_addr));
      set_nonblocking(app_listener.get(), true);
    }
  }

  void sleep_interruptible(Nanos d) {
    const auto until = Clock::now() + std::chrono::nanoseconds(d);
    while (!stop_requested && Clock::now() < until) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }

  void run() {
    bind();
    Nanos backoff = millis(100);
    while (!stop_requested) {
      try {
        Fd wire;
        if (role == Role::Serve) {
          wire = accept_tcp(tunnel_listener.get(), millis(200));
          if (!wire) continue;
        } else {
          wire = connect_tcp(parse_host_port(cfg.peer_addr), cfg.connect_timeout);
        }
        auto keys = perform_handshake(wire.get(), cfg, role, millis(5000));
        backoff = millis(100);
        ++sessions;
        logger()->info("session established ({})", role == Role::Serve ? "serve" : "connect");
        run_session(std::move(wire), keys);
        logger()->info("session ended");
      } catch (const Error& e) {
        set_error(e.what());
        logger()->warn("tunnel: {}", e.what());
        if (e.kind() == ErrorKind::Config) throw;
        sleep_interruptible(backoff);
        backoff = std::min<Nanos>(backoff * 2, millis(5000));
      }
    }
  }

  void run_session(Fd wire, const SessionKeys& keys);
};

namespace {

// Messages from the wire workers to the application-side loop.
struct Inbox {
  std::mutex mu;
  std::vector<RxEvents> rx;
  std::map<FlowId, Bytes> drops;
  bool transport_down = false;
  std::string reason;
};

struct AppConn {
  Fd fd;
  FlowId flow = 0;  // 0 until registered
  bool local = false;
  std::string line;
  ByteVec to_app;
  std::size_t to_app_pos = 0;
  ByteVec held;  // read from the application, not yet accepted by the queue
  bool app_eof = false;
  bool fin_queued = false;
  bool peer_done = false;
  bool write_shut = false;
  bool dead = false;
  std::uint64_t tx_total = 0;
};

}  // namespace

void Endpoint::Impl::run_session(Fd wire, const SessionKeys& keys) {
  const auto origin = Clock::now();
  auto now_ns = [&] { return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - origin).count(); };

  timeval snd_timeout{5, 0};
  ::setsockopt(wire.get(), SOL_SOCKET, SO_SNDTIMEO, &snd_timeout, sizeof snd_timeout);

  Session session(cfg.framing.flows_max, role, cfg.idle_timeout);
  session.established(0);

  std::uint64_t seed = 0;
  if (cfg.seed) {
    seed = dpcore::derive_seed(*cfg.seed, static_cast<std::uint64_t>(role));
  } else {
    randombytes_buf(&seed, sizeof seed);
  }
  TxQueues tx(cfg.params, cfg.noise_sigma(), cfg.queue_bytes, std::make_unique<dpcore::GaussianNoise>(seed));
  TunnelSender sender(cfg.framing, make_cipher(cfg.cipher, keys.tx));
  Receiver receiver(role, cfg.framing, make_cipher(cfg.cipher, keys.rx));
  SpscChannel<Handoff> channel(256);
  Inbox inbox;

  auto post_down = [&](const std::string& why) {
    {
      std::lock_guard lock(inbox.mu);
      if (!inbox.transport_down) inbox.reason = why;
      inbox.transport_down = true;
    }
    waker.notify();
  };

  PrepareLoop loop(cfg.schedule, origin, [&](std::int64_t k) {
    TickOutput out = tx.step(k);
    if (!out.drops.empty()) {
      {
        std::lock_guard lock(inbox.mu);
        for (const auto& [f, b] : out.drops) inbox.drops[f] += b;
      }
      waker.notify();
    }
    return out;
  }, channel);

  std::thread tx_thread([&] {
    try {
      while (auto h = channel.pop()) {
        const auto records = sender.seal(h->tick.content);
        std::uint64_t wire_bytes = 0;
        for (const auto& r : records) {
          write_all(wire.get(), r);
          wire_bytes += r.size();
        }
        records_tx += records.size();
        wire_tx += wire_bytes;
        ++ticks;
        if (on_tick) {
          on_tick(TickLog{h->k, h->tick.content.dp_len, h->tick.content.payload_bytes(),
                          h->tick.content.dummy_bytes(), wire_bytes, h->handoff_offset});
        }
      }
    } catch (const std::exception& e) {
      post_down(std::string("transmit: ") + e.what());
    }
  });

  std::thread rx_thread([&] {
    try {
      RecordStreamParser parser(cfg.framing);
      ByteVec buf(kReadChunk);
      while (true) {
        const std::size_t n = read_some(wire.get(), buf);
        if (n == 0) {
          post_down("peer closed the transport");
          return;
        }
        const Nanos now = now_ns();
        for (const auto& rec : parser.feed(std::span(buf.data(), n))) {
          RxEvents ev = receiver.process_record(rec, now);
          if (!ev.empty()) {
            {
              std::lock_guard lock(inbox.mu);
              inbox.rx.push_back(std::move(ev));
            }
            waker.notify();
          }
        }
        receiver.expire_pending(now);
        integrity = receiver.stats().integrity_failures;
        dummy_rx = receiver.stats().dummy_bytes;
      }
    } catch (const std::exception& e) {
      post_down(std::string("receive: ") + e.what());
    }
  });

  loop.start();
  active = true;

  std::map<int, std::unique_ptr<AppConn>> conns;
  std::map<FlowId, AppConn*> by_flow;
  std::set<FlowId> fin_pending;
  bool closing = false;
  bool bye_sent = false;
  bool peer_bye = false;
  bool abort = false;
  Nanos drained_at = -1;
  Nanos hard_deadline = 0;
  std::string end_reason;

  auto push_control = [&](const ControlMessage& m) {
    if (!tx.push_control(encode_control(m), now_ns())) {
      abort = true;
      end_reason = "control queue full";
    }
  };

  auto drop_conn = [&](AppConn& c) {
    c.dead = true;
    if (c.flow != 0) {
      auto it = by_flow.find(c.flow);
      if (it != by_flow.end() && it->second == &c) by_flow.erase(it);
    }
  };

  // Aborts a flow from this side: discard queued bytes, send RESET, keep the
  // slot until the peer's RESET comes back.
  auto reset_flow = [&](FlowId flow) {
    auto* e = session.flows().find(flow);
    if (e && !e->reset_sent) {
      tx.erase(flow);
      push_control({ControlType::Reset, flow, {}});
      e->reset_sent = true;
    }
    auto it = by_flow.find(flow);
    if (it != by_flow.end()) drop_conn(*it->second);
  };

  auto maybe_finish = [&](AppConn& c) {
    if (c.peer_done && !c.write_shut && c.to_app_pos == c.to_app.size()) {
      ::shutdown(c.fd.get(), SHUT_WR);
      c.write_shut = true;
    }
    if (c.write_shut && c.fin_queued) drop_conn(c);
  };

  auto begin_close = [&](const std::string& why) {
    if (closing) return;
    closing = true;
    end_reason = why;
    for (auto& [fd, c] : conns) drop_conn(*c);
    for (auto id : session.begin_close()) tx.erase(id);
    push_control({ControlType::Bye, 0, {}});
    bye_sent = true;
    hard_deadline = now_ns() + cfg.params.W + 5 * cfg.params.T + kNanosPerSecond;
  };

  auto reject_app = [&](AppConn& c, const std::string& why) {
    ++rejected;
    const std::string msg = nlohmann::json{{"error", why}}.dump() + "\n";
    ::send(c.fd.get(), msg.data(), msg.size(), MSG_NOSIGNAL | MSG_DONTWAIT);
    drop_conn(c);
  };

  auto register_local = [&](AppConn& c) {
    const auto nl = c.line.find('\n');
    const std::string line = c.line.substr(0, nl);
    Registration reg;
    try {
      reg = parse_registration(line);
    } catch (const Error& e) {
      reject_app(c, e.what());
      return;
    }
    const std::string endpoint = reg.dst_host + ":" + std::to_string(reg.dst_port);
    auto id = session.flows().allocate(endpoint);
    if (!id) {
      reject_app(c, "no free flow slot");
      return;
    }
    auto* e = session.flows().find(*id);
    e->privacy_descriptor = reg.privacy_descriptor;
    if (reg.privacy_descriptor) logger()->info("flow {}: privacy descriptor recorded; tunnel budget applies", *id);
    c.flow = *id;
    by_flow[*id] = &c;
    ++opened;
    const std::string rest = c.line.substr(nl + 1);
    c.line.clear();
    push_control({ControlType::Open, *id, ByteVec(line.begin(), line.end())});
    c.held.assign(rest.begin(), rest.end());
  };

  auto open_remote = [&](const ControlMessage& m) {
    const std::string line(m.payload.begin(), m.payload.end());
    Registration reg;
    try {
      reg = parse_registration(line);
    } catch (const Error& e) {
      logger()->warn("flow {}: bad registration from peer: {}", m.flow_id, e.what());
      ++rejected;
      push_control({ControlType::Reset, m.flow_id, {}});
      return;
    }
    const std::string endpoint = reg.dst_host + ":" + std::to_string(reg.dst_port);
    if (closing || !session.flows().register_remote(m.flow_id, endpoint)) {
      ++rejected;
      push_control({ControlType::Reset, m.flow_id, {}});
      return;
    }
    session.flows().find(m.flow_id)->privacy_descriptor = reg.privacy_descriptor;
    Fd fd;
    try {
      fd = connect_tcp({reg.dst_host, reg.dst_port}, cfg.connect_timeout);
    } catch (const Error& e) {
      logger()->warn("flow {}: {}", m.flow_id, e.what());
      reset_flow(m.flow_id);
      return;
    }
    set_nonblocking(fd.get(), true);
    auto c = std::make_unique<AppConn>();
    c->fd = std::move(fd);
    c->flow = m.flow_id;
    by_flow[m.flow_id] = c.get();
    ++opened;
    conns[c->fd.get()] = std::move(c);
  };

  auto handle_rx = [&](RxEvents& ev, Nanos now) {
    for (const auto& m : ev.control) {
      switch (m.type) {
        case ControlType::Open:
          open_remote(m);
          break;
        case ControlType::Reset: {
          auto* e = session.flows().find(m.flow_id);
          if (!e) break;
          if (!e->reset_sent) {
            tx.erase(m.flow_id);
            push_control({ControlType::Reset, m.flow_id, {}});
          }
          session.flows().release(m.flow_id);
          tx.erase(m.flow_id);
          auto it = by_flow.find(m.flow_id);
          if (it != by_flow.end()) drop_conn(*it->second);
          break;
        }
        case ControlType::Bye:
          peer_bye = true;
          begin_close("peer closed the session");
          break;
        case ControlType::Fin:
          break;
      }
    }
    for (auto& d : ev.data) {
      auto it = by_flow.find(d.flow_id);
      if (it == by_flow.end()) continue;
      auto& c = *it->second;
      c.to_app.insert(c.to_app.end(), d.bytes.begin(), d.bytes.end());
      session.activity(now);
    }
    for (FlowId f : ev.finished) {
      if (session.flows().mark_fin_received(f)) tx.erase(f);
      auto it = by_flow.find(f);
      if (it == by_flow.end()) continue;
      it->second->peer_done = true;
      maybe_finish(*it->second);
    }
  };

  ByteVec rbuf(kReadChunk);
  while (true) {
    std::vector<pollfd> pfds;
    pfds.push_back({waker.fd(), POLLIN, 0});
    const bool accepting = app_listener && !closing;
    if (accepting) pfds.push_back({app_listener.get(), POLLIN, 0});
    bool any_held = false;
    for (auto& [fd, c] : conns) {
      short ev = 0;
      if (!c->app_eof && c->held.empty() && !closing) ev |= POLLIN;
      if (c->to_app_pos < c->to_app.size()) ev |= POLLOUT;
      if (!c->held.empty()) any_held = true;
      pfds.push_back({fd, ev, 0});
    }
    ::poll(pfds.data(), pfds.size(), any_held ? 2 : 50);
    const Nanos now = now_ns();

    if (pfds[0].revents & POLLIN) waker.drain();
    std::vector<RxEvents> rx;
    std::map<FlowId, Bytes> drops;
    bool down = false;
    std::string down_reason;
    {
      std::lock_guard lock(inbox.mu);
      rx.swap(inbox.rx);
      drops.swap(inbox.drops);
      down = inbox.transport_down;
      down_reason = inbox.reason;
    }
    for (auto& ev : rx) handle_rx(ev, now);
    for (const auto& [flow, bytes] : drops) {
      drop_bytes += static_cast<std::uint64_t>(bytes);
      if (flow == kControlQueue) {
        abort = true;
        end_reason = "control bytes expired in the queue";
      } else {
        logger()->warn("flow {}: {} bytes expired in the queue; resetting", flow, bytes);
        reset_flow(flow);
      }
    }
    if (down) {
      abort = true;
      if (end_reason.empty()) end_reason = down_reason;
    }

    if (accepting && (pfds[1].revents & POLLIN)) {
      while (true) {
        Fd fd(::accept4(app_listener.get(), nullptr, nullptr, SOCK_CLOEXEC | SOCK_NONBLOCK));
        if (!fd) break;
        set_nodelay(fd.get());
        auto c = std::make_unique<AppConn>();
        c->local = true;
        c->fd = std::move(fd);
        conns[c->fd.get()] = std::move(c);
      }
    }

    for (std::size_t i = accepting ? 2 : 1; i < pfds.size(); ++i) {
      auto it = conns.find(pfds[i].fd);
      if (it == conns.end()) continue;
      AppConn& c = *it->second;
      if (c.dead) continue;
      const short re = pfds[i].revents;

      if ((re & POLLOUT) && c.to_app_pos < c.to_app.size()) {
        const ssize_t n = ::send(c.fd.get(), c.to_app.data() + c.to_app_pos, c.to_app.size() - c.to_app_pos,
                                 MSG_NOSIGNAL | MSG_DONTWAIT);
        if (n > 0) {
          c.to_app_pos += static_cast<std::size_t>(n);
          if (c.to_app_pos == c.to_app.size()) {
            c.to_app.clear();
            c.to_app_pos = 0;
          }
          maybe_finish(c);
        } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
          if (c.flow) reset_flow(c.flow); else drop_conn(c);
          continue;
        }
      }
      if (c.dead) continue;

      if (re & (POLLIN | POLLHUP | POLLERR)) {
        if (c.flow == 0 && c.local) {
          const ssize_t n = ::recv(c.fd.get(), rbuf.data(), rbuf.size(), 0);
          if (n <= 0) {
            if (n == 0 || (errno != EAGAIN && errno != EINTR)) drop_conn(c);
            continue;
          }
          c.line.append(reinterpret_cast<const char*>(rbuf.data()), static_cast<std::size_t>(n));
          if (c.line.find('\n') != std::string::npos) {
            register_local(c);
          } else if (c.line.size() > kMaxRegistrationLine) {
            reject_app(c, "registration line too long");
          }
        } else if (c.flow != 0 && !c.app_eof && c.held.empty() && !closing) {
          const ssize_t n = ::recv(c.fd.get(), rbuf.data(), rbuf.size(), 0);
          if (n == 0) {
            c.app_eof = true;
          } else if (n < 0) {
            if (errno != EAGAIN && errno != EINTR) reset_flow(c.flow);
          } else {
            c.held.assign(rbuf.begin(), rbuf.begin() + n);
            session.activity(now);
          }
        }
      }
    }

    // Push held bytes; a full queue leaves them held (backpressure).
    for (auto& [fd, c] : conns) {
      if (c->dead || c->flow == 0) continue;
      if (!c->held.empty()) {
        if (tx.push(c->flow, c->held, now)) {
          c->tx_total += c->held.size();
          c->held.clear();
        }
      }
      if (c->app_eof && c->held.empty() && !c->fin_queued) {
        push_control(make_fin(c->flow, c->tx_total));
        c->fin_queued = true;
        fin_pending.insert(c->flow);
        maybe_finish(*c);
      }
    }
    // A FIN counts as sent once the flow's queued data has left the queue;
    // only then may the slot (and its offsets) be reused.
    for (auto it = fin_pending.begin(); it != fin_pending.end();) {
      if (tx.queued(*it) == 0) {
        if (session.flows().mark_fin_sent(*it)) tx.erase(*it);
        it = fin_pending.erase(it);
      } else {
        ++it;
      }
    }

    for (auto it = conns.begin(); it != conns.end();) {
      if (it->second->dead) it = conns.erase(it); else ++it;
    }

    if (stop_requested) begin_close("local shutdown");
    if (session.idle_expired(now)) begin_close("idle timeout");
    if (abort) break;
    if (closing) {
      if (drained_at < 0 && tx.queued(kControlQueue) == 0) drained_at = now;
      // Leave room for the ticks that carry the BYE to reach the wire.
      const Nanos settle = 3 * cfg.params.T;
      if (drained_at >= 0 && now - drained_at >= settle && peer_bye) break;
      if (now >= hard_deadline) break;
    }
  }

  active = false;
  session.closed();
  loop.stop();
  channel.close();
  if (abort) ::shutdown(wire.get(), SHUT_RDWR);
  tx_thread.join();
  ::shutdown(wire.get(), SHUT_RDWR);
  rx_thread.join();
  const auto st = loop.stats();
  prep_over += st.prepare_overruns;
  handoff_over += st.handoff_overruns;
  if (!end_reason.empty()) {
    logger()->info("session closed: {}", end_reason);
    if (abort) set_error(end_reason);
  }
}

Endpoint::Endpoint(TunnelConfig cfg, Role role) : impl_(std::make_unique<Impl>(std::move(cfg), role)) {
  if (sodium_init() < 0) fail(ErrorKind::Session, "libsodium initialisation failed");
  if (role == Role::Connect && impl_->cfg.peer_addr.empty()) fail(ErrorKind::Config, "connect role needs peer_addr");
}

Endpoint::~Endpoint() = default;

void Endpoint::set_tick_callback(std::function<void(const TickLog&)> cb) { impl_->on_tick = std::move(cb); }
void Endpoint::bind() { impl_->bind(); }
std::uint16_t Endpoint::tunnel_port() const {
  return impl_->tunnel_listener ? local_port(impl_->tunnel_listener.get()) : 0;
}
std::uint16_t Endpoint::app_port() const { return impl_->app_listener ? local_port(impl_->app_listener.get()) : 0; }
void Endpoint::run() { impl_->run(); }

void Endpoint::stop() noexcept {
  impl_->stop_requested = true;
  impl_->waker.notify();
}

bool Endpoint::session_active() const { return impl_->active; }

EndpointStats Endpoint::stats() const {
  const auto& i = *impl_;
  return {i.sessions, i.ticks, i.prep_over, i.handoff_over, i.records_tx, i.wire_tx, i.integrity,
          i.dummy_rx, i.opened, i.rejected, i.drop_bytes};
}

std::string Endpoint::last_error() const {
  std::lock_guard lock(impl_->err_mu);
  return impl_->last_error;
}

}  // namespace netshaper::tunnel
