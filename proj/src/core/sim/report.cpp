#include "sim/report.hpp"

#include <iomanip>
#include <ostream>

namespace netshaper::sim {

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json cutoff_json(Bytes cutoff) {
  return cutoff == kUnbounded ? nlohmann::json(nullptr) : nlohmann::json(cutoff);
}

}  // namespace

void write_interval_csv(std::ostream& out, const SimResult& result) {
  out << "k,dp_len,payload,dummy,drops\n";
  for (const auto& buf : result.shaped) {
    out << buf.interval_index << ',' << buf.dp_len << ',' << buf.payload_bytes() << ','
        << buf.dummy << ',' << buf.drops << '\n';
  }
}

nlohmann::json summary_json(const SimResult& result) {
  nlohmann::json j;
  j["sigma"] = result.sigma;
  j["cutoff"] = cutoff_json(result.cutoff);
  j["interval_ns"] = result.interval;
  j["origin_ns"] = result.origin;
  j["intervals"] = result.shaped.size();
  j["flows"] = result.flows;
  j["payload_in_bytes"] = result.payload_in;
  j["payload_out_bytes"] = result.payload_out;
  j["dummy_bytes"] = result.dummy;
  j["drop_bytes"] = result.drops;
  j["still_queued_bytes"] = result.still_queued;
  j["drop_fraction"] = result.drop_fraction;
  j["bandwidth_overhead"] = optional_number(result.bandwidth_overhead);
  j["overhead_undefined"] = !result.bandwidth_overhead.has_value();
  j["mean_per_flow_overhead"] = optional_number(result.mean_per_flow_overhead);
  nlohmann::json per_flow = nlohmann::json::array();
  for (const auto& v : result.per_flow_overhead) per_flow.push_back(optional_number(v));
  j["per_flow_overhead"] = per_flow;
  j["latency"] = {
      {"mean_ms", result.latency.mean_ns / 1e6},
      {"std_ms", result.latency.std_ns / 1e6},
      {"p99_ms", static_cast<double>(result.latency.p99_ns) / 1e6},
      {"max_ms", static_cast<double>(result.latency.max_ns) / 1e6},
      {"sampled_bytes", result.latency.sampled_bytes},
  };
  return j;
}

void write_sweep_csv(std::ostream& out, SweepAxis axis, std::span<const SweepRow> rows) {
  out << "axis,value,seed,sigma,cutoff,intervals,payload_bytes,dummy_bytes,drop_bytes,"
         "bandwidth_overhead,mean_per_flow_overhead,latency_mean_ms,latency_p99_ms\n";
  const auto flags = out.flags();
  out << std::setprecision(10);
  for (const auto& row : rows) {
    const auto& r = row.result;
    out << axis_name(axis) << ',' << row.value << ',' << row.seed << ',' << r.sigma << ',';
    if (r.cutoff == kUnbounded) {
      out << "inf";
    } else {
      out << r.cutoff;
    }
    out << ',' << r.shaped.size() << ',' << r.payload_in << ',' << r.dummy << ',' << r.drops << ',';
    if (r.bandwidth_overhead) out << *r.bandwidth_overhead;
    out << ',';
    if (r.mean_per_flow_overhead) out << *r.mean_per_flow_overhead;
    out << ',' << r.latency.mean_ns / 1e6 << ',' << static_cast<double>(r.latency.p99_ns) / 1e6 << '\n';
  }
  out.flags(flags);
}

}  // namespace netshaper::sim
