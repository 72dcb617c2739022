// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.
#include <sys/socket.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "common/log.hpp"
#include "dpcore/accountant.hpp"
#include "dpcore/gaussian.hpp"
#include "loopback.hpp"
#include "sim/report.hpp"
#include "sim/simulator.hpp"
#include "traces/distance.hpp"
#include "tunnel_helpers.hpp"

using namespace netshaper;
using traces::Direction;
using traces::PacketRecord;
using traces::Stream;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

std::string strf(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Stream random_stream(std::mt19937_64& rng, std::size_t n, Nanos horizon, Bytes max_len, FlowId flow = 1) {
  std::vector<PacketRecord> recs;
  for (std::size_t i = 0; i < n; ++i)
    recs.push_back({static_cast<Nanos>(rng() % static_cast<std::uint64_t>(horizon)),
                    1 + static_cast<Bytes>(rng() % static_cast<std::uint64_t>(max_len)), flow, Direction::Outbound});
  return Stream(std::move(recs));
}

// 1 ------------------------------------------------------------------------
Outcome golden_numbers() {
  const double dw = 2.5e6, delta = 1e-6;
  const double sigma = dpcore::sigma_for_budget(dw, 1.0, delta, 5);
  const double e300 = dpcore::compose_to_dp(dw, sigma, 300, delta).epsilon_total;
  const double e3600 = dpcore::compose_to_dp(dw, sigma, 3600, delta).epsilon_total;
  const bool ok = std::abs(e300 / 8.92 - 1) <= 0.05 && std::abs(e3600 / 38.8 - 1) <= 0.05;
  return {ok, strf("sigma=%.4g B, 300 queries eps=%.4f (ref 8.92), 3600 queries eps=%.4f (ref 38.8)", sigma, e300,
                  e3600)};
}

// 2 ------------------------------------------------------------------------
Outcome plot_points() {
  const double a = dpcore::sigma_for_budget(2.5e6, 200, 1e-6, 4);
  const double b = dpcore::sigma_for_budget(2.5e6, 1, 1e-6, 4);
  const bool ok = a >= 0.26e6 && a <= 0.38e6 && b >= 9e6 && b <= 36e6;
  return {ok, strf("eps=200: %.4f MB in [0.26, 0.38]; eps=1: %.3f MB within 2x of 18", a / 1e6, b / 1e6)};
}

// 3 ------------------------------------------------------------------------
// Edits stream `s` inside [from, from + span) for at most `budget` bytes of
// L1 difference: resize, drop or add packets.
void perturb(std::mt19937_64& rng, std::vector<PacketRecord>& recs, Nanos from, Nanos span, Bytes budget) {
  while (budget > 0) {
    std::vector<std::size_t> inside;
    for (std::size_t i = 0; i < recs.size(); ++i)
      if (recs[i].t >= from && recs[i].t < from + span) inside.push_back(i);
    const Bytes step = 1 + static_cast<Bytes>(rng() % static_cast<std::uint64_t>(budget));
    const int op = static_cast<int>(rng() % 3);
    if (op == 0 || inside.empty()) {
      recs.push_back({from + static_cast<Nanos>(rng() % static_cast<std::uint64_t>(span)), step, 1, Direction::Outbound});
      budget -= step;
    } else {
      auto& r = recs[inside[rng() % inside.size()]];
      if (op == 1 && r.len <= step) {
        budget -= r.len;
        r = recs.back();
        recs.pop_back();
      } else if (op == 1) {
        r.len -= step;
        budget -= step;
      } else {
        r.len += step;
        budget -= step;
      }
    }
  }
}

Outcome sensitivity_bound() {
  std::mt19937_64 rng(3001);
  constexpr int kTrials = 1200;
  long queries = 0, q_viol = 0, r_viol = 0, pairs_far = 0;
  Bytes worst = 0, worst_dw = 1;
  for (int trial = 0; trial < kTrials; ++trial) {
    const Nanos T = millis(1 + static_cast<Nanos>(rng() % 20));
    const Nanos W = T * static_cast<Nanos>(1 + rng() % 10);
    const Bytes dw = 100 + static_cast<Bytes>(rng() % 20000);
    const Nanos horizon = W * static_cast<Nanos>(2 + rng() % 6);
    auto base = random_stream(rng, 20 + rng() % 200, horizon, 3000);
    std::vector<PacketRecord> recs(base.records().begin(), base.records().end());
    // Either one edited window or several edited windows at least 2W apart.
    const bool spread = trial % 2 == 1;
    const int clusters = spread ? 2 + static_cast<int>(rng() % 3) : 1;
    Nanos at = static_cast<Nanos>(rng() % static_cast<std::uint64_t>(W));
    for (int c = 0; c < clusters && at < horizon; ++c) {
      perturb(rng, recs, at, W, 1 + static_cast<Bytes>(rng() % static_cast<std::uint64_t>(dw)));
      at += 2 * W + static_cast<Nanos>(rng() % static_cast<std::uint64_t>(W));
    }
    for (auto& r : recs) r.flow_id = 1;
    Stream a = base, b(std::move(recs));
    if (b.empty() || !traces::are_neighbors(a, b, W, T, dw)) {
      ++pairs_far;
      continue;
    }

    sim::SimConfig cfg;
    cfg.params = {1.0, 1e-6, dw, T, W, rng() % 3 == 0 ? static_cast<Bytes>(1 + rng() % 20000) : kUnbounded};
    cfg.sigma = static_cast<double>(rng() % 8000);
    cfg.seed = rng();
    const Nanos end = std::max(a.last_time(), b.last_time()) + W + T;
    cfg.horizon_end = end;
    // An identical first packet pins both runs to the same query times.
    std::vector<PacketRecord> pa(a.records().begin(), a.records().end()), pb(b.records().begin(), b.records().end());
    pa.push_back({0, 1, 1, Direction::Outbound});
    pb.push_back({0, 1, 1, Direction::Outbound});
    std::vector<Stream> sa{Stream(pa)}, sb{Stream(pb)};
    auto ra = sim::simulate(sa, cfg), rb = sim::simulate(sb, cfg);
    const auto n = std::min(ra.shaped.size(), rb.shaped.size());
    for (std::size_t k = 0; k < n; ++k) {
      const Bytes dq = std::abs(ra.shaped[k].queue_len - rb.shaped[k].queue_len);
      const Bytes dr = std::abs(ra.shaped[k].payload_bytes() - rb.shaped[k].payload_bytes());
      ++queries;
      if (dq > dw) ++q_viol;
      if (dr > dq) ++r_viol;
      if (dq * worst_dw > worst * dw) worst = dq, worst_dw = dw;
    }
  }
  const bool ok = q_viol == 0 && r_viol == 0 && pairs_far == 0;
  return {ok, strf("%d pairs, %ld queries: |dQ|>dW %ld, |dR|>|dQ| %ld, construction misses %ld, worst |dQ|/dW=%.3f",
                  kTrials, queries, q_viol, r_viol, pairs_far, static_cast<double>(worst) / worst_dw)};
}

// 4 ------------------------------------------------------------------------
Outcome shaping_invariants() {
  std::mt19937_64 rng(4001);
  constexpr int kCases = 600;
  long bad = 0;
  std::string first;
  auto fail = [&](int c, const char* what) {
    if (bad++ == 0) first = strf("case %d: %s", c, what);
  };
  for (int c = 0; c < kCases; ++c) {
    const Nanos T = millis(1 + static_cast<Nanos>(rng() % 20));
    const Nanos W = T * static_cast<Nanos>(1 + rng() % 10);
    std::vector<Stream> streams;
    const auto F = 1 + rng() % 4;
    for (std::size_t f = 0; f < F; ++f) streams.push_back(random_stream(rng, 1 + rng() % 300, kNanosPerSecond, 3000, f + 1));
    sim::SimConfig cfg;
    cfg.params = {1.0, 1e-6, 5000, T, W, rng() % 2 ? static_cast<Bytes>(1 + rng() % 10000) : kUnbounded};
    cfg.sigma = static_cast<double>(rng() % 6000);
    cfg.seed = rng();
    cfg.cutoff_mode = rng() % 2 ? sim::CutoffMode::Fixed : sim::CutoffMode::FlowScaled;
    auto r = sim::simulate(streams, cfg);
    if (r.payload_in != r.payload_out + r.drops + r.still_queued) fail(c, "conservation");
    for (std::size_t k = 0; k < r.shaped.size(); ++k) {
      const auto& b = r.shaped[k];
      if (b.payload_bytes() + b.dummy != b.dp_len) fail(c, "payload + dummy != dp_len");
      if (b.dp_len > r.cutoff || b.dp_len < 0) fail(c, "dp_len outside [0, cutoff]");
      if (b.emit_time != r.origin + static_cast<Nanos>(k + 1) * T) fail(c, "emission off the kT grid");
      for (const auto& run : b.payload)
        if (b.emit_time - run.enqueue_time > W || b.emit_time < run.enqueue_time) fail(c, "residency outside [0, W]");
    }
  }
  return {bad == 0, strf("%d randomized runs, %ld violations%s%s", kCases, bad, bad ? "; first " : "", first.c_str())};
}

// 5 ------------------------------------------------------------------------
Outcome determinism_and_oracle() {
  std::mt19937_64 rng(5001);
  long mismatches = 0, runs = 0;
  for (int trial = 0; trial < 100; ++trial, ++runs) {
    const Nanos T = millis(1 + static_cast<Nanos>(rng() % 20));
    sim::SimConfig cfg;
    cfg.params = {1.0, 1e-6, 1000, T, T * static_cast<Nanos>(1 + rng() % 10), kUnbounded};
    cfg.sigma = 0.0;
    std::vector<Stream> s{random_stream(rng, 300, 2 * kNanosPerSecond, 1500)};
    auto r = sim::simulate(s, cfg);
    const Nanos origin = s[0].first_time() / T * T;
    auto want = traces::windowed_repr(s[0], origin, static_cast<Nanos>(r.shaped.size()) * T, T).values;
    for (std::size_t k = 0; k < r.shaped.size(); ++k)
      if (r.shaped[k].dp_len != want[k] || r.shaped[k].payload_bytes() != want[k]) ++mismatches;
  }
  std::vector<Stream> s{random_stream(rng, 2000, 10 * kNanosPerSecond, 1500),
                        random_stream(rng, 2000, 10 * kNanosPerSecond, 1500, 2)};
  sim::SimConfig cfg;
  cfg.params = {1.0, 1e-6, 20000, millis(10), millis(200), 30000};
  cfg.seed = 99;
  auto csv = [&] {
    std::ostringstream out;
    sim::write_interval_csv(out, sim::simulate(s, cfg));
    return out.str();
  };
  const std::string c1 = csv(), c2 = csv();
  const bool ok = mismatches == 0 && c1 == c2;
  return {ok, strf("%ld noiseless runs, %ld interval mismatches vs shifted windowed_repr; seeded CSV %s (%zu bytes)",
                  runs, mismatches, c1 == c2 ? "identical" : "DIFFERS", c1.size())};
}

// 6 ------------------------------------------------------------------------
Outcome amortization() {
  // Video-like flows: one 200 kB segment per second, random phase.
  std::mt19937_64 rng(6001);
  auto flow = [&](FlowId id) {
    std::vector<PacketRecord> recs;
    const Nanos phase = static_cast<Nanos>(rng() % static_cast<std::uint64_t>(kNanosPerSecond));
    for (int seg = 0; seg < 60; ++seg)
      for (int p = 0; p < 140; ++p)
        recs.push_back({phase + seg * kNanosPerSecond + p * 200'000, 1430, id, Direction::Inbound});
    return Stream(std::move(recs));
  };
  std::vector<Stream> all;
  for (FlowId i = 1; i <= 16; ++i) all.push_back(flow(i));
  std::vector<double> per_flow;
  std::string detail;
  for (std::size_t F : {1u, 4u, 16u}) {
    sim::SimConfig cfg;
    cfg.params = {1.0, 1e-6, 200'000, millis(100), kNanosPerSecond, 4'000'000};
    cfg.cutoff_mode = sim::CutoffMode::Fixed;
    cfg.seed = 6;
    auto r = sim::simulate(std::span(all).first(F), cfg);
    per_flow.push_back(r.mean_per_flow_overhead.value_or(NAN));
    detail += strf("%sF=%zu: %.4f", detail.empty() ? "" : ", ", F, per_flow.back());
  }
  const bool ok = per_flow[1] <= per_flow[0] && per_flow[2] <= per_flow[1];
  return {ok, "mean per-flow overhead " + detail};
}

// 7 ------------------------------------------------------------------------
Outcome web_dip() {
  // Small pages: a handful of few-kB objects fetched within 40 ms.
  std::mt19937_64 rng(7001);
  std::vector<Stream> pages;
  for (int i = 0; i < 300; ++i) {
    std::vector<PacketRecord> recs;
    const Nanos start = kNanosPerSecond + static_cast<Nanos>(rng() % 100) * kNanosPerMilli;
    const int objects = 2 + static_cast<int>(rng() % 7);
    for (int o = 0; o < objects; ++o)
      recs.push_back({start + static_cast<Nanos>(rng() % 40'000'000), 1000 + static_cast<Bytes>(rng() % 7000), 1,
                      Direction::Inbound});
    pages.emplace_back(std::move(recs));
  }
  const std::pair<Nanos, Bytes> setups[] = {{millis(10), 60'800}, {millis(50), 60'800}, {millis(100), 110'900}};
  std::vector<double> mean;
  std::string detail;
  for (auto [T, cutoff] : setups) {
    double sum = 0;
    for (std::size_t i = 0; i < pages.size(); ++i) {
      sim::SimConfig cfg;
      cfg.params = {1.0, 1e-6, 60'000, T, kNanosPerSecond, cutoff};
      cfg.horizon = sim::Horizon::Drain;
      cfg.seed = dpcore::derive_seed(7, i);
      sum += *sim::simulate(std::span(&pages[i], 1), cfg).bandwidth_overhead;
    }
    mean.push_back(sum / static_cast<double>(pages.size()));
    detail += strf("%sT=%lldms: %.2f", detail.empty() ? "" : ", ", static_cast<long long>(T / kNanosPerMilli), mean.back());
  }
  const bool ok = mean[1] < mean[0] && mean[1] < mean[2];
  return {ok, "mean per-page overhead " + detail};
}

// 8 ------------------------------------------------------------------------
Outcome loopback() {
  using namespace netshaper::tunnel;
  std::string detail;
  bool ok = true;
  try {
    Fd sink_listener;
    auto sink = nstest::start_sink(sink_listener);
    nstest::Loopback lb;
    if (!lb.wait_active()) return {false, "tunnel session did not come up"};
    std::mt19937_64 rng(8001);
    ByteVec data(1 << 20);
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    const auto t0 = std::chrono::steady_clock::now();
    Fd app = nstest::open_app_flow(lb.app_port(), local_port(sink_listener.get()));
    write_all(app.get(), data);
    ::shutdown(app.get(), SHUT_WR);
    if (sink.wait_for(std::chrono::seconds(60)) != std::future_status::ready) return {false, "sink timed out"};
    const bool exact = sink.get() == data;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    lb.stop();
    const auto framing = nstest::loopback_config("listen_addr = 127.0.0.1:0\n").framing;
    long ticks = 0, off = 0;
    for (const auto& log : {lb.connect_ticks(), lb.serve_ticks()})
      for (const auto& t : log) {
        ++ticks;
        if (t.wire_bytes != tick_wire_bytes(t.dp_len, framing)) ++off;
      }
    const auto failures = lb.connect().stats().integrity_failures + lb.serve().stats().integrity_failures;
    ok = exact && off == 0 && failures == 0;
    detail = strf("1 MiB %s in %.2f s; %ld ticks, %ld with wire bytes off the dp_len formula, %llu integrity failures",
                 exact ? "byte-exact" : "CORRUPTED", secs, ticks, off, static_cast<unsigned long long>(failures));
  } catch (const std::exception& e) {
    return {false, std::string("loopback error: ") + e.what()};
  }

  // Same dp_len, different payload share: identical record sizes.
  FramingConfig cfg{1400, 16};
  ChaChaPolyCipher cipher(std::array<std::uint8_t, 32>{});
  long split_mismatch = 0;
  for (std::uint32_t dp : {1u, 500u, 1400u, 9999u, 65536u, 250'000u}) {
    std::vector<std::size_t> ref;
    for (int pct = 0; pct <= 100; pct += 10) {
      const auto payload = static_cast<std::uint32_t>(std::uint64_t{dp} * static_cast<std::uint64_t>(pct) / 100);
      TickContent t;
      t.dp_len = dp;
      if (payload > 0) t.frames.push_back(Frame{FrameKind::Data, 2, 0, ByteVec(payload, 9), 0});
      if (dp > payload) t.frames.push_back(Frame{FrameKind::Dummy, 0, 0, {}, dp - payload});
      std::uint64_t seq = 0;
      std::vector<std::size_t> sizes;
      for (const auto& r : encode_frames(t, cfg, cipher, seq)) sizes.push_back(r.size());
      if (ref.empty()) ref = sizes;
      if (sizes != ref) ++split_mismatch;
    }
  }
  ok = ok && split_mismatch == 0;
  return {ok, detail + strf("; payload-fraction sweep: %ld size mismatches", split_mismatch)};
}

// 9 ------------------------------------------------------------------------
Outcome tamaraw() {
  using Big = boost::multiprecision::cpp_bin_float_50;
  // Round trip through ln(n * gamma). Forming n * gamma (2^-53 relative) and
  // the logarithm (one ulp of epsilon, at most |epsilon| * 2^-52) perturb the
  // input; e^epsilon carries that into the result as relative error. Beyond
  // it the bound must be exact to one ulp.
  long grid = 0, impl_bad = 0, gamma_bad = 0, spots = 0, spot_bad = 0;
  double worst_impl = 0, worst_gamma = 0;
  for (std::uint64_t n : {1ull, 2ull, 3ull, 7ull, 10ull, 100ull, 1000ull, 123457ull, 1000000ull})
    for (int i = 1; i <= 40; ++i) {
      const double gamma = i / 40.0;
      if (static_cast<double>(n) * gamma < 1.0) continue;
      ++grid;
      const double eps = std::log(static_cast<double>(n) * gamma);
      const double got = dpcore::tamaraw_gamma_bound(eps, n);
      const double ulp = std::nextafter(gamma, 2.0) - gamma;
      Big exact = boost::multiprecision::exp(Big(eps)) / Big(n);
      if (exact > 1) exact = 1;
      const double impl_err = std::abs(static_cast<double>((Big(got) - exact) / Big(ulp)));
      const double allowed = gamma * (eps * std::ldexp(1.0, -52) + std::ldexp(1.0, -53)) / ulp + 1.0;
      const double gamma_err = std::abs(got - gamma) / ulp;
      worst_impl = std::max(worst_impl, impl_err);
      worst_gamma = std::max(worst_gamma, gamma_err / allowed);
      if (impl_err > 1.0) ++impl_bad;
      if (gamma_err > allowed) ++gamma_bad;
    }
  for (double eps : {0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 3.3, 5.0, 9.2})
    for (std::uint64_t n : {2ull, 10ull, 100ull, 1000ull, 100000ull}) {
      ++spots;
      Big ref = boost::multiprecision::exp(Big(eps)) / Big(n);
      if (ref > 1) ref = 1;
      const double got = dpcore::tamaraw_gamma_bound(eps, n);
      const Big rel = boost::multiprecision::abs((Big(got) - ref) / ref);
      if (rel > Big("1e-12")) ++spot_bad;
    }
  return {impl_bad == 0 && gamma_bad == 0 && spot_bad == 0,
          strf("grid %ld points: %ld beyond 1 ulp of exact e^eps/n (worst %.2f ulp), %ld beyond the input-rounding "
               "bound around gamma (worst %.2f of it); %ld spot values vs 50-digit reference, %ld beyond 1e-12",
               grid, impl_bad, worst_impl, gamma_bad, worst_gamma, spots, spot_bad)};
}

// 10 -----------------------------------------------------------------------
Outcome codec_round_trip() {
  using namespace netshaper::tunnel;
  std::mt19937_64 rng(10001);
  std::array<std::uint8_t, 32> key{};
  for (auto& b : key) b = static_cast<std::uint8_t>(rng());
  ChaChaPolyCipher tx(key), rx(key);
  std::uint64_t tx_seq = 0, rx_seq = 0;
  constexpr int kTicks = 10000;
  long bad = 0;
  for (int i = 0; i < kTicks; ++i) {
    FramingConfig cfg{static_cast<std::size_t>(128 + rng() % 9000), static_cast<std::uint32_t>(1 + rng() % 32)};
    auto tick = nstest::random_tick(rng, cfg.flows_max, 1 + static_cast<std::uint32_t>(rng() % 4000));
    std::vector<Frame> pieces;
    bool opened = true;
    for (const auto& rec : encode_frames(tick, cfg, tx, tx_seq)) {
      auto frames = open_record(rec, rx, rx_seq++);
      if (!frames) {
        opened = false;
        break;
      }
      pieces.insert(pieces.end(), frames->begin(), frames->end());
    }
    if (!opened || nstest::merge_pieces(pieces) != tick.frames) ++bad;
  }
  return {bad == 0, strf("%d random ticks, %ld not reproduced exactly", kTicks, bad)};
}

}  // namespace

int main() {
  logger()->set_level(spdlog::level::warn);
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double limit_s;  // 0: no runtime bound
  };
  const Criterion all[] = {
      {1, "accountant golden numbers", golden_numbers, 1.0},
      {2, "calibration plot points", plot_points, 0.0},
      {3, "sensitivity property suite", sensitivity_bound, 30.0},
      {4, "shaping invariants", shaping_invariants, 0.0},
      {5, "simulator determinism and oracle", determinism_and_oracle, 0.0},
      {6, "amortization across flows", amortization, 0.0},
      {7, "web sweep dip", web_dip, 0.0},
      {8, "tunnel loopback integrity", loopback, 0.0},
      {9, "tamaraw bound", tamaraw, 0.0},
      {10, "frame codec round trip", codec_round_trip, 0.0},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs >= c.limit_s) {
      o.ok = false;
      o.detail += strf(" [runtime %.2f s exceeds %.0f s]", secs, c.limit_s);
    }
    std::printf("%s %2d %s: %s (%.2f s)\n", o.ok ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.ok) ++failed;
  }
  return failed;
}
