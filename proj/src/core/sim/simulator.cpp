#include "sim/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "dpcore/accountant.hpp"

namespace netshaper::sim {

double noise_sigma(const SimConfig& cfg) {
  if (cfg.sigma) {
    if (!(*cfg.sigma >= 0.0)) fail(ErrorKind::Validation, "sigma must be >= 0");
    return *cfg.sigma;
  }
  const auto& p = cfg.params;
  switch (cfg.calibration) {
    case Calibration::PerWindow:
      return dpcore::sigma_for_budget(static_cast<double>(p.delta_w), p.epsilon, p.delta,
                                      static_cast<std::uint64_t>(p.queries_per_window()));
    case Calibration::PerQuery:
      return dpcore::gaussian_sigma(static_cast<double>(p.delta_w), p.epsilon, p.delta);
  }
  return 0.0;
}

Bytes effective_cutoff(const SimConfig& cfg, std::size_t stream_count) {
  const Bytes base = cfg.params.cutoff;
  if (cfg.cutoff_mode == CutoffMode::Fixed || base == kUnbounded) return base;
  const auto flows = static_cast<Bytes>(cfg.flows != 0 ? cfg.flows : stream_count);
  if (flows > 0 && base > kUnbounded / flows) return kUnbounded;
  return base * std::max<Bytes>(flows, 1);
}

namespace {

struct Arrival {
  Nanos t;
  Bytes len;
  FlowId flow;
};

LatencyStats latency_stats(const std::vector<shaping::ShapedBuffer>& shaped) {
  std::vector<std::pair<Nanos, Bytes>> samples;
  for (const auto& buf : shaped) {
    for (const auto& run : buf.payload) samples.emplace_back(buf.emit_time - run.enqueue_time, run.bytes);
  }
  LatencyStats stats;
  if (samples.empty()) return stats;
  long double sum = 0, sum_sq = 0, weight = 0;
  for (const auto& [lat, bytes] : samples) {
    sum += static_cast<long double>(lat) * bytes;
    sum_sq += static_cast<long double>(lat) * lat * bytes;
    weight += bytes;
  }
  const long double mean = sum / weight;
  stats.mean_ns = static_cast<double>(mean);
  stats.std_ns = static_cast<double>(std::sqrt(std::max<long double>(0, sum_sq / weight - mean * mean)));
  stats.sampled_bytes = static_cast<Bytes>(weight);

  std::sort(samples.begin(), samples.end());
  stats.max_ns = samples.back().first;
  const auto total = static_cast<Bytes>(weight);
  const Bytes rank = (99 * total + 99) / 100;
  Bytes seen = 0;
  for (const auto& [lat, bytes] : samples) {
    seen += bytes;
    if (seen >= rank) {
      stats.p99_ns = lat;
      break;
    }
  }
  return stats;
}

}  // namespace

SimResult simulate(std::span<const traces::Stream> streams, const SimConfig& cfg) {
  cfg.params.validate();
  if (streams.empty()) fail(ErrorKind::Validation, "simulate needs at least one stream");

  SimResult result;
  result.sigma = noise_sigma(cfg);
  result.cutoff = effective_cutoff(cfg, streams.size());
  result.interval = cfg.params.T;
  result.flows = cfg.flows != 0 ? cfg.flows : static_cast<std::uint32_t>(streams.size());

  dpcore::DpParams params = cfg.params;
  params.cutoff = result.cutoff;
  const Nanos T = params.T;

  std::vector<Arrival> arrivals;
  std::vector<Bytes> flow_payload(streams.size(), 0);
  for (std::size_t i = 0; i < streams.size(); ++i) {
    for (const auto& r : streams[i].records()) {
      arrivals.push_back({r.t, r.len, static_cast<FlowId>(i + 1)});
      flow_payload[i] += r.len;
    }
  }
  std::stable_sort(arrivals.begin(), arrivals.end(),
                   [](const Arrival& a, const Arrival& b) { return a.t < b.t; });

  Nanos end = 0;
  if (!arrivals.empty()) {
    result.origin = floor_div(arrivals.front().t, T) * T;
    end = arrivals.back().t + params.W;
  }
  if (cfg.horizon_end) end = std::max(end, *cfg.horizon_end);
  const std::int64_t last_k = floor_div(end - result.origin, T) + 1;

  shaping::ShapingState state(result.origin);
  dpcore::GaussianNoise rng(cfg.seed);
  std::size_t next = 0;

  for (std::int64_t k = 1; k <= last_k; ++k) {
    const Nanos now = result.origin + k * T;
    for (; next < arrivals.size() && arrivals[next].t < now; ++next) {
      const auto& a = arrivals[next];
      (void)state.queues.enqueue(a.flow, a.len, a.t);
      result.payload_in += a.len;
    }
    auto buf = shaping::shaping_step(state, params, result.sigma, now, rng);
    result.payload_out += buf.payload_bytes();
    result.dummy += buf.dummy;
    result.drops += buf.drops;
    result.shaped.push_back(std::move(buf));
    if (cfg.horizon == Horizon::Drain && next == arrivals.size() && state.queues.total() == 0) break;
  }
  // Anything not yet offered (only possible if the loop ended early) still counts.
  for (; next < arrivals.size(); ++next) result.payload_in += arrivals[next].len;
  result.still_queued = state.queues.total();

  if (result.payload_in > 0) {
    result.bandwidth_overhead = static_cast<double>(result.dummy) / static_cast<double>(result.payload_in);
    result.drop_fraction = static_cast<double>(result.drops) / static_cast<double>(result.payload_in);
  }
  const double dummy_share = static_cast<double>(result.dummy) / static_cast<double>(streams.size());
  double sum = 0.0;
  std::size_t defined = 0;
  for (Bytes bytes : flow_payload) {
    if (bytes > 0) {
      double v = dummy_share / static_cast<double>(bytes);
      result.per_flow_overhead.emplace_back(v);
      sum += v;
      ++defined;
    } else {
      result.per_flow_overhead.emplace_back(std::nullopt);
    }
  }
  if (defined > 0) result.mean_per_flow_overhead = sum / static_cast<double>(defined);
  result.latency = latency_stats(result.shaped);
  return result;
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "T") return SweepAxis::T;
  if (name == "epsilon") return SweepAxis::Epsilon;
  if (name == "sigma") return SweepAxis::Sigma;
  if (name == "flows") return SweepAxis::Flows;
  if (name == "cutoff") return SweepAxis::Cutoff;
  fail(ErrorKind::Usage, "unknown sweep axis '" + name + "' (expected T, epsilon, sigma, flows, cutoff)");
}

const char* axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::T: return "T";
    case SweepAxis::Epsilon: return "epsilon";
    case SweepAxis::Sigma: return "sigma";
    case SweepAxis::Flows: return "flows";
    case SweepAxis::Cutoff: return "cutoff";
  }
  return "?";
}

std::vector<SweepRow> overhead_sweep(std::span<const traces::Stream> streams, const SimConfig& cfg,
                                     SweepAxis axis, std::span<const double> values) {
  std::vector<SweepRow> rows;
  rows.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    SimConfig row_cfg = cfg;
    row_cfg.seed = dpcore::derive_seed(cfg.seed, i);
    std::vector<traces::Stream> row_streams(streams.begin(), streams.end());
    switch (axis) {
      case SweepAxis::T:
        row_cfg.params.T = static_cast<Nanos>(std::llround(v));
        break;
      case SweepAxis::Epsilon:
        row_cfg.params.epsilon = v;
        break;
      case SweepAxis::Sigma:
        row_cfg.sigma = v;
        break;
      case SweepAxis::Flows: {
        const auto f = static_cast<std::size_t>(std::llround(v));
        if (f < 1 || streams.empty()) fail(ErrorKind::Validation, "flows must be >= 1");
        row_streams.clear();
        for (std::size_t j = 0; j < f; ++j) row_streams.push_back(streams[j % streams.size()]);
        row_cfg.flows = 0;
        break;
      }
      case SweepAxis::Cutoff:
        row_cfg.params.cutoff = static_cast<Bytes>(std::llround(v));
        break;
    }
    rows.push_back({v, row_cfg.seed, simulate(row_streams, row_cfg)});
  }
  return rows;
}

}  // namespace netshaper::sim
