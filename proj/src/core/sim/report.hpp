#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include <json.hpp>

#include "sim/simulator.hpp"

namespace netshaper::sim {

// One row per interval: k,dp_len,payload,dummy,drops
void write_interval_csv(std::ostream& out, const SimResult& result);

nlohmann::json summary_json(const SimResult& result);

// Header plus one row per sweep value.
void write_sweep_csv(std::ostream& out, SweepAxis axis, std::span<const SweepRow> rows);

}  // namespace netshaper::sim
