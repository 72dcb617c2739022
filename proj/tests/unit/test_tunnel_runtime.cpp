#include <poll.h>

#include <algorithm>
#include <random>

#include <doctest.h>

#include "helpers.hpp"
#include "loopback.hpp"
#include "tunnel/schedule.hpp"
#include "tunnel/sender.hpp"

using namespace netshaper;
using namespace netshaper::tunnel;

namespace {

struct PhaseRun {
  std::vector<Handoff> handoffs;
  ScheduleStats stats;
};

// Runs the loop for `ticks` intervals and collects every handoff.
PhaseRun run_loop(const PrepareSchedule& s, std::int64_t ticks, bool loaded) {
  dpcore::DpParams p{1.0, 1e-6, 1000, s.T, 50 * s.T, 64 * 1024};
  TxQueues q(p, 0.0, kUnbounded, std::make_unique<dpcore::GaussianNoise>(3));
  const ByteVec chunk(64 * 1024, 0x5a);
  SpscChannel<Handoff> ch(256);
  PhaseRun out;
  std::thread consumer([&] {
    while (auto h = ch.pop()) out.handoffs.push_back(std::move(*h));
  });
  PrepareLoop loop(s, Clock::now(), [&](std::int64_t k) {
    if (loaded) (void)q.push(1, chunk, k * s.T);
    return q.step(k);
  }, ch);
  loop.start();
  while (loop.stats().ticks < static_cast<std::uint64_t>(ticks)) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  loop.stop();
  ch.close();
  consumer.join();
  out.stats = loop.stats();
  return out;
}

Nanos quantile(std::vector<Nanos> v, double q) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
}

std::vector<Nanos> offsets(const PhaseRun& r) {
  std::vector<Nanos> v;
  for (const auto& h : r.handoffs) v.push_back(h.handoff_offset);
  return v;
}

bool wait_eof(int fd, Nanos timeout) {
  const auto end = Clock::now() + std::chrono::nanoseconds(timeout);
  std::vector<std::uint8_t> buf(4096);
  while (Clock::now() < end) {
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    try {
      if (read_some(fd, buf) == 0) return true;
    } catch (const Error&) {
      return true;  // reset by the endpoint counts as closed
    }
  }
  return false;
}

}  // namespace

TEST_CASE("schedule validation and wait_until") {
  CHECK_NOTHROW(PrepareSchedule{}.validate());
  CHECK_THROWS_KIND((PrepareSchedule{millis(10), millis(9), millis(2)}.validate()), ErrorKind::Config);
  CHECK_THROWS_KIND((PrepareSchedule{millis(10), 0, millis(1)}.validate()), ErrorKind::Config);
  const auto t = Clock::now() + std::chrono::milliseconds(5);
  wait_until(t);
  CHECK(Clock::now() >= t);
}

TEST_CASE("SpscChannel drops when full and drains after close") {
  SpscChannel<int> ch(2);
  CHECK(ch.push(1));
  CHECK(ch.push(2));
  CHECK_FALSE(ch.push(3));
  ch.close();
  CHECK_FALSE(ch.push(4));
  CHECK(ch.pop() == 1);
  CHECK(ch.pop() == 2);
  CHECK_FALSE(ch.pop().has_value());
}

TEST_CASE("prepare loop hands off on phase and its timing does not depend on load") {
  const PrepareSchedule s{millis(2), millis(1), 500'000};
  constexpr std::int64_t kTicks = 2500;
  auto idle = run_loop(s, kTicks, false);
  auto loaded = run_loop(s, kTicks, true);

  for (const auto* r : {&idle, &loaded}) {
    REQUIRE(r->handoffs.size() >= static_cast<std::size_t>(kTicks));
    std::size_t on_phase = 0;
    for (std::size_t i = 0; i < r->handoffs.size(); ++i) {
      const auto& h = r->handoffs[i];
      CHECK(h.k == static_cast<std::int64_t>(i) + 1);  // no interval skipped
      CHECK(h.handoff_offset >= s.T_prep);
      if (h.handoff_offset < s.T_prep + millis(1)) ++on_phase;
    }
    CHECK(static_cast<double>(on_phase) >= 0.99 * static_cast<double>(r->handoffs.size()));
  }
  // Loaded ticks really carried payload.
  CHECK(loaded.handoffs.back().tick.content.dp_len == 64 * 1024);
  CHECK(idle.handoffs.back().tick.content.dp_len == 0);

  const auto a = offsets(idle), b = offsets(loaded);
  CHECK(std::abs(quantile(a, 0.5) - quantile(b, 0.5)) <= 100'000);
  CHECK(std::abs(quantile(a, 0.9) - quantile(b, 0.9)) <= 100'000);
}

TEST_CASE("in-process loopback carries 1 MB byte-exact") {
  Fd sink_listener;
  auto sink = nstest::start_sink(sink_listener);
  nstest::Loopback lb;
  REQUIRE(lb.wait_active());

  std::mt19937_64 rng(21);
  ByteVec data(1 << 20);
  for (auto& b : data) b = static_cast<std::uint8_t>(rng());
  {
    Fd app = nstest::open_app_flow(lb.app_port(), local_port(sink_listener.get()));
    write_all(app.get(), data);
    ::shutdown(app.get(), SHUT_WR);
    REQUIRE(sink.wait_for(std::chrono::seconds(30)) == std::future_status::ready);
    CHECK(sink.get() == data);
    CHECK(wait_eof(app.get(), 5 * kNanosPerSecond));
  }
  lb.stop();

  const auto framing = nstest::loopback_config("listen_addr = 127.0.0.1:0\n").framing;
  for (const auto& log : {lb.connect_ticks(), lb.serve_ticks()}) {
    REQUIRE_FALSE(log.empty());
    for (const auto& t : log) {
      CHECK(t.wire_bytes == tick_wire_bytes(t.dp_len, framing));
      CHECK(t.payload + t.dummy == t.dp_len);
    }
  }
  std::uint64_t payload = 0;
  for (const auto& t : lb.connect_ticks()) payload += t.payload;
  CHECK(payload >= data.size());
  CHECK(lb.connect().stats().integrity_failures == 0);
  CHECK(lb.serve().stats().integrity_failures == 0);
  CHECK(lb.serve().stats().flows_opened >= 1);
}

TEST_CASE("idle session closes its flows and reconnects") {
  Fd sink_listener;
  auto sink = nstest::start_sink(sink_listener);
  nstest::Loopback lb("idle_timeout_ms = 300\n");
  REQUIRE(lb.wait_active());
  Fd app = nstest::open_app_flow(lb.app_port(), local_port(sink_listener.get()));
  const std::string hi = "hi";
  write_all(app.get(), std::span(reinterpret_cast<const std::uint8_t*>(hi.data()), hi.size()));

  CHECK(wait_eof(app.get(), 10 * kNanosPerSecond));
  REQUIRE(sink.wait_for(std::chrono::seconds(10)) == std::future_status::ready);
  CHECK(sink.get() == ByteVec{'h', 'i'});

  const auto end = Clock::now() + std::chrono::seconds(10);
  while (Clock::now() < end && (lb.connect().stats().sessions < 2 || lb.serve().stats().sessions < 2))
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  CHECK(lb.connect().stats().sessions >= 2);
  CHECK(lb.serve().stats().sessions >= 2);
}
