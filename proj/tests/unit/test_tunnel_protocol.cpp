#include <sys/socket.h>

#include <future>
#include <random>
#include <sstream>

#include <doctest.h>

#include "dpcore/accountant.hpp"
#include "helpers.hpp"
#include "tunnel/config.hpp"
#include "tunnel/handshake.hpp"
#include "tunnel/receiver.hpp"
#include "tunnel/sender.hpp"
#include "tunnel/session.hpp"
#include "tunnel/socket.hpp"

using namespace netshaper;
using namespace netshaper::tunnel;
using nstest::ScriptedNoise;

namespace {

const std::string kPsk = std::string(64, 'a');

std::string config_text(const std::string& extra = "", const std::string& psk = kPsk) {
  return "# test endpoint\n"
         "psk_hex = " + psk + "\n"
         "T_ms = 10\nW_ms = 1000\ndelta_w_bytes = 100000\nepsilon = 1\ndelta = 1e-6\n"
         "cutoff_bytes = 200000\nflows_max = 8\nlisten_addr = 127.0.0.1:0\n" + extra;
}

TunnelConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_tunnel_config(in);
}

std::unique_ptr<Cipher> null_cipher() { return std::make_unique<NullCipher>(); }

Frame data(FlowId id, std::uint64_t off, const std::string& s) {
  return Frame{FrameKind::Data, id, off, ByteVec(s.begin(), s.end()), 0};
}

Frame control(std::uint64_t off, const ByteVec& body) { return Frame{FrameKind::Control, 0, off, body, 0}; }

std::string str(const ByteVec& v) { return std::string(v.begin(), v.end()); }

dpcore::DpParams tx_params(Bytes cutoff = 1 << 20) { return {1.0, 1e-6, 1000, millis(10), millis(100), cutoff}; }

}  // namespace

TEST_CASE("receiver delivers DATA and discards DUMMY") {
  Receiver rx(Role::Connect, FramingConfig{}, null_cipher());
  auto ev = rx.process_frames({data(1, 0, "abc")}, 0);
  REQUIRE(ev.data.size() == 1);
  CHECK(ev.data[0].flow_id == 1);
  CHECK(str(ev.data[0].bytes) == "abc");

  ev = rx.process_frames({Frame{FrameKind::Dummy, 0, 0, {}, 1'000'000}}, 0);
  CHECK(ev.empty());
  CHECK(rx.stats().dummy_bytes == 1'000'000);
}

TEST_CASE("receiver reassembles out-of-order pieces by offset") {
  Receiver rx(Role::Connect, FramingConfig{}, null_cipher());
  CHECK(rx.process_frames({data(2, 3, "def")}, 0).data.empty());
  auto ev = rx.process_frames({data(2, 0, "abc"), data(2, 0, "ab")}, 0);
  REQUIRE(ev.data.size() == 1);
  CHECK(str(ev.data[0].bytes) == "abcdef");
}

TEST_CASE("receiver holds unregistered remote flows until OPEN") {
  Receiver rx(Role::Serve, FramingConfig{}, null_cipher());
  CHECK(rx.process_frames({data(1, 0, "hi")}, 0).data.empty());
  CHECK(rx.pending_flows() == 1);

  auto open = encode_control({ControlType::Open, 1, ByteVec{'{', '}'}});
  auto ev = rx.process_frames({control(0, open)}, 10);
  REQUIRE(ev.control.size() == 1);
  REQUIRE(ev.data.size() == 1);
  CHECK(str(ev.data[0].bytes) == "hi");
  CHECK(rx.pending_flows() == 0);
}

TEST_CASE("pending data expires") {
  ReceiverOptions opts;
  opts.pending_timeout = 100;
  Receiver rx(Role::Serve, FramingConfig{}, null_cipher(), opts);
  (void)rx.process_frames({data(5, 0, "xyz")}, 0);
  rx.expire_pending(100);
  CHECK(rx.pending_flows() == 1);
  rx.expire_pending(101);
  CHECK(rx.pending_flows() == 0);
  CHECK(rx.stats().dropped_unknown_bytes == 3);
}

TEST_CASE("FIN completes a flow once every byte arrived") {
  Receiver rx(Role::Connect, FramingConfig{}, null_cipher());
  auto fin = encode_control(make_fin(1, 5));
  auto ev = rx.process_frames({control(0, fin), data(1, 0, "abc")}, 0);
  CHECK(ev.finished.empty());
  ev = rx.process_frames({data(1, 3, "de")}, 0);
  REQUIRE(ev.finished.size() == 1);
  CHECK(ev.finished[0] == 1);
}

TEST_CASE("receiver counts integrity failures") {
  FramingConfig cfg{512, 4};
  std::array<std::uint8_t, 32> k1{}, k2{};
  k2[0] = 1;
  Receiver rx(Role::Connect, cfg, std::make_unique<ChaChaPolyCipher>(k1));
  TunnelSender tx(cfg, std::make_unique<ChaChaPolyCipher>(k2));
  TickContent t;
  t.dp_len = 10;
  t.frames.push_back(Frame{FrameKind::Dummy, 0, 0, {}, 10});
  for (const auto& r : tx.seal(t)) CHECK(rx.process_record(r, 0).empty());
  CHECK(rx.stats().integrity_failures == 1);
}

TEST_CASE("flow map allocation") {
  FlowMap m(128, Role::Connect);
  auto first = m.allocate("a");
  REQUIRE(first.has_value());
  CHECK(*first == 1);
  for (int i = 2; i <= 128; ++i) CHECK(m.allocate("x").has_value());
  CHECK_FALSE(m.allocate("overflow").has_value());
  CHECK(m.size() == 128);

  m.release(7);
  CHECK(m.allocate("again") == FlowId{7});

  FlowMap serve(4, Role::Serve);
  CHECK(serve.allocate("s") == (kServeFlowBit | 1));
  CHECK(serve.register_remote(3, "peer"));
  CHECK_FALSE(serve.register_remote(3, "dup"));
  CHECK_FALSE(serve.register_remote(kServeFlowBit | 2, "wrong range"));
  CHECK_FALSE(serve.register_remote(9, "beyond flows_max"));
}

TEST_CASE("flow map close handshake") {
  FlowMap m(4, Role::Connect);
  auto id = *m.allocate("a");
  CHECK_FALSE(m.mark_fin_sent(id));
  CHECK(m.find(id)->state == StreamState::Closing);
  CHECK(m.mark_fin_received(id));
  CHECK(m.find(id) == nullptr);
  CHECK(*m.allocate("b") == id);
}

TEST_CASE("session lifecycle and idle timeout") {
  Session s(4, Role::Connect, millis(100));
  CHECK(s.state() == SessionState::Establishing);
  CHECK_FALSE(s.idle_expired(millis(1000)));
  s.established(0);
  CHECK(s.state() == SessionState::Active);
  CHECK_THROWS(s.established(0));
  (void)s.flows().allocate("a");
  (void)s.flows().allocate("b");
  s.activity(millis(50));
  CHECK_FALSE(s.idle_expired(millis(150)));
  CHECK(s.idle_expired(millis(151)));
  auto closed = s.begin_close();
  CHECK(closed == std::vector<FlowId>{1, 2});
  CHECK(s.state() == SessionState::Closing);
  CHECK(s.flows().size() == 0);
  s.closed();
  CHECK(s.state() == SessionState::Closed);

  Session never(4, Role::Serve, 0);
  never.established(0);
  CHECK_FALSE(never.idle_expired(1'000 * kNanosPerSecond));
}

TEST_CASE("config parsing") {
  auto c = parse(config_text("mtu = 900\ncipher = null\nseed = 5\n"));
  CHECK(c.params.T == millis(10));
  CHECK(c.params.W == millis(1000));
  CHECK(c.framing.mtu == 900);
  CHECK(c.framing.flows_max == 8);
  CHECK(c.cipher == CipherKind::Null);
  CHECK(c.seed == std::uint64_t{5});
  CHECK(c.psk[0] == 0xaa);
  CHECK(c.schedule.T_prep == millis(6));
  CHECK(c.noise_sigma() == doctest::Approx(dpcore::sigma_for_budget(100000, 1, 1e-6, 100)));
  CHECK(parse(config_text("sigma_bytes = 42\n")).noise_sigma() == 42.0);

  CHECK_THROWS_KIND(parse(config_text("", "abc")), ErrorKind::Config);
  CHECK_THROWS_KIND(parse(config_text("", std::string(64, 'g'))), ErrorKind::Config);
  CHECK_THROWS_KIND(parse(config_text("bogus = 1\n")), ErrorKind::Config);
  CHECK_THROWS_KIND(parse(config_text("T_ms = 10\n")), ErrorKind::Parse);
  CHECK_THROWS_KIND(parse(config_text("no equals sign\n")), ErrorKind::Parse);
  CHECK_THROWS_KIND(parse("psk_hex = " + kPsk + "\n"), ErrorKind::Config);
  CHECK_THROWS_KIND(parse(config_text("T_prep_ms = 9\nT_enq_ms = 2\n")), ErrorKind::Config);
  CHECK_THROWS_KIND(load_tunnel_config("/nonexistent/endpoint.conf"), ErrorKind::Io);

  auto w = config_text();
  w.replace(w.find("W_ms = 1000"), 11, "W_ms = 1005");
  CHECK_THROWS_KIND(parse(w), ErrorKind::Config);
}

TEST_CASE("canonical parameters") {
  auto a = parse(config_text());
  auto b = parse(config_text("seed = 9\n"));
  CHECK(a.canonical_params() == b.canonical_params());
  auto c = parse(config_text("mtu = 900\n"));
  CHECK(a.canonical_params() != c.canonical_params());
}

TEST_CASE("prepare schedule validation") {
  CHECK_NOTHROW(PrepareSchedule{}.validate());
  CHECK_THROWS_KIND((PrepareSchedule{millis(10), 0, millis(1)}.validate()), ErrorKind::Config);
  CHECK_THROWS_KIND((PrepareSchedule{millis(10), millis(6), 0}.validate()), ErrorKind::Config);
  CHECK_THROWS_KIND((PrepareSchedule{millis(10), millis(8), millis(3)}.validate()), ErrorKind::Config);
  CHECK_NOTHROW(PrepareSchedule{millis(10), millis(9), millis(1)}.validate());
}

TEST_CASE("handshake over a socket pair") {
  auto run = [](const TunnelConfig& serve_cfg, const TunnelConfig& connect_cfg) {
    int fds[2];
    REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
    Fd a(fds[0]), b(fds[1]);
    auto serve = std::async(std::launch::async, [&] { return perform_handshake(a.get(), serve_cfg, Role::Serve, millis(2000)); });
    std::optional<SessionKeys> ck;
    std::exception_ptr cerr;
    try {
      ck = perform_handshake(b.get(), connect_cfg, Role::Connect, millis(2000));
    } catch (...) {
      cerr = std::current_exception();
      b.reset();  // unblock the serve side
    }
    std::optional<SessionKeys> sk;
    std::exception_ptr serr;
    try {
      sk = serve.get();
    } catch (...) {
      serr = std::current_exception();
    }
    return std::make_tuple(sk, ck, serr, cerr);
  };
  auto kind_of = [](std::exception_ptr p) -> std::optional<ErrorKind> {
    if (!p) return std::nullopt;
    try {
      std::rethrow_exception(p);
    } catch (const Error& e) {
      return e.kind();
    } catch (...) {
      return std::nullopt;
    }
  };

  const auto cfg = parse(config_text());
  SUBCASE("matching configs agree on keys") {
    auto [sk, ck, serr, cerr] = run(cfg, cfg);
    REQUIRE(sk.has_value());
    REQUIRE(ck.has_value());
    CHECK(sk->tx == ck->rx);
    CHECK(sk->rx == ck->tx);
    CHECK(sk->tx != sk->rx);
  }
  SUBCASE("parameter mismatch") {
    auto other = cfg;
    other.params.W = millis(2000);
    auto [sk, ck, serr, cerr] = run(cfg, other);
    CHECK_FALSE(ck.has_value());
    CHECK(kind_of(cerr) == ErrorKind::ParameterMismatch);
  }
  SUBCASE("wrong key") {
    auto other = parse(config_text("", std::string(64, 'b')));
    auto [sk, ck, serr, cerr] = run(cfg, other);
    CHECK_FALSE(ck.has_value());
    CHECK(kind_of(cerr) == ErrorKind::Auth);
    CHECK_FALSE(sk.has_value());
  }
}

TEST_CASE("direction keys depend on both nonces") {
  Key psk{};
  Nonce n1{}, n2{};
  n2[0] = 1;
  auto a = derive_keys(psk, Role::Connect, n1, n2);
  auto b = derive_keys(psk, Role::Connect, n2, n1);
  CHECK(a.tx != b.tx);
  auto s = derive_keys(psk, Role::Serve, n1, n2);
  CHECK(a.tx == s.rx);
}

TEST_CASE("tx queues: noiseless 100 bytes become one DATA frame") {
  TxQueues q(tx_params(), 0.0, kUnbounded, std::make_unique<dpcore::GaussianNoise>(1));
  ByteVec payload(100);
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<std::uint8_t>(i);
  REQUIRE(q.push(1, payload, millis(3)));
  auto out = q.step(1);
  CHECK(out.content.dp_len == 100);
  REQUIRE(out.content.frames.size() == 1);
  CHECK(out.content.frames[0].kind == FrameKind::Data);
  CHECK(out.content.frames[0].body == payload);
  CHECK(out.content.frames[0].offset == 0);
  CHECK(out.content.dummy_bytes() == 0);
}

TEST_CASE("tx queues: idle tick is all dummy") {
  TxQueues q(tx_params(), 10.0, kUnbounded, std::make_unique<ScriptedNoise>(std::vector<double>{300.0}));
  auto out = q.step(1);
  CHECK(out.content.dp_len == 300);
  REQUIRE(out.content.frames.size() == 1);
  CHECK(out.content.frames[0].kind == FrameKind::Dummy);
  CHECK(out.content.frames[0].dummy_len == 300);
}

TEST_CASE("tx queues: frame order and offsets") {
  TxQueues q(tx_params(), 10.0, kUnbounded, std::make_unique<ScriptedNoise>(std::vector<double>{100.0, 0.0}));
  REQUIRE(q.push(3, ByteVec(20, 3), 1));
  REQUIRE(q.push(1, ByteVec(10, 1), 2));
  REQUIRE(q.push_control(encode_control({ControlType::Bye, 0, {}}), 3));
  auto out = q.step(1);
  REQUIRE(out.content.frames.size() == 4);
  CHECK(out.content.frames[0].kind == FrameKind::Control);
  CHECK(out.content.frames[1].flow_id == 1);
  CHECK(out.content.frames[2].flow_id == 3);
  CHECK(out.content.frames[3].kind == FrameKind::Dummy);
  CHECK(out.content.body_bytes() == out.content.dp_len);

  REQUIRE(q.push(1, ByteVec(5, 1), millis(12)));
  out = q.step(2);
  REQUIRE(out.content.frames.size() == 1);
  CHECK(out.content.frames[0].offset == 10);
  CHECK(q.total_queued() == 0);
}

TEST_CASE("tx queues: bounded per flow and erasable") {
  TxQueues q(tx_params(), 0.0, 50, std::make_unique<dpcore::GaussianNoise>(1));
  CHECK(q.push(1, ByteVec(50, 0), 0));
  CHECK_FALSE(q.push(1, ByteVec(1, 0), 0));
  CHECK(q.push(2, ByteVec(10, 0), 0));
  CHECK(q.queued(1) == 50);
  q.erase(1);
  CHECK(q.queued(1) == 0);
  CHECK(q.total_queued() == 10);
}

TEST_CASE("tx queues: TTL drops are reported per flow") {
  TxQueues q(tx_params(), 10.0, kUnbounded, std::make_unique<ScriptedNoise>(std::vector<double>(20, -1e9)));
  REQUIRE(q.push(4, ByteVec(30, 0), 0));
  Bytes dropped = 0;
  for (int k = 1; k <= 11; ++k) {
    auto out = q.step(k);
    for (auto [id, n] : out.drops) {
      CHECK(id == 4);
      dropped += n;
    }
  }
  CHECK(dropped == 30);
}
