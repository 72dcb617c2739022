#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpcore/params.hpp"
#include "shaping/shaper.hpp"
#include "traces/stream.hpp"

namespace netshaper::sim {

enum class CutoffMode : std::uint8_t {
  FlowScaled,  // params.cutoff is per flow, multiplied by the flow count
  Fixed,       // params.cutoff applies to the whole tunnel
};

enum class Calibration : std::uint8_t {
  PerWindow,  // (epsilon, delta) budget for the W/T queries of one window
  PerQuery,   // classical calibration of each query with (epsilon, delta)
};

enum class Horizon : std::uint8_t {
  Ttl,    // run until the first boundary after last arrival + W
  Drain,  // stop at the first boundary after the last arrival with empty queues
};

struct SimConfig {
  dpcore::DpParams params;
  std::uint64_t seed = 0;
  std::uint32_t flows = 0;  // 0: one flow per input stream
  CutoffMode cutoff_mode = CutoffMode::FlowScaled;
  Calibration calibration = Calibration::PerWindow;
  std::optional<double> sigma;          // overrides calibration when set
  Horizon horizon = Horizon::Ttl;
  std::optional<Nanos> horizon_end;     // run at least until this time
};

// Noise standard deviation the run will use.
double noise_sigma(const SimConfig& cfg);
Bytes effective_cutoff(const SimConfig& cfg, std::size_t stream_count);

struct LatencyStats {
  double mean_ns = 0.0;
  double std_ns = 0.0;
  Nanos p99_ns = 0;
  Nanos max_ns = 0;
  Bytes sampled_bytes = 0;
};

struct SimResult {
  std::vector<shaping::ShapedBuffer> shaped;
  double sigma = 0.0;
  Bytes cutoff = kUnbounded;
  Nanos origin = 0;
  Nanos interval = 0;
  std::uint32_t flows = 0;

  Bytes payload_in = 0;
  Bytes payload_out = 0;
  Bytes dummy = 0;
  Bytes drops = 0;
  Bytes still_queued = 0;

  // dummy / payload_in; empty when no payload was offered.
  std::optional<double> bandwidth_overhead;
  // (dummy / flows) / payload of flow i; empty for flows with no payload.
  std::vector<std::optional<double>> per_flow_overhead;
  std::optional<double> mean_per_flow_overhead;
  double drop_fraction = 0.0;
  LatencyStats latency;  // payload bytes only
};

// Replays the streams (stream i becomes flow i + 1) through one shared
// shaper, querying at origin + kT for k = 1, 2, ...
SimResult simulate(std::span<const traces::Stream> streams, const SimConfig& cfg);

enum class SweepAxis : std::uint8_t { T, Epsilon, Sigma, Flows, Cutoff };

SweepAxis parse_axis(const std::string& name);
const char* axis_name(SweepAxis axis);

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  SimResult result;
};

// One simulate() per value; row i is seeded with derive_seed(cfg.seed, i).
// Units: T in ns, sigma and cutoff in bytes, flows as a count (the first
// `flows` streams, reused cyclically).
std::vector<SweepRow> overhead_sweep(std::span<const traces::Stream> streams, const SimConfig& cfg,
                                     SweepAxis axis, std::span<const double> values);

}  // namespace netshaper::sim
