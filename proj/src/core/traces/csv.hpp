#pragma once

#include <filesystem>
#include <iosfwd>

#include "traces/stream.hpp"

namespace netshaper::traces {

enum class TraceFormat { Csv };

// Reads a trace with header `t_ns,len_bytes,flow_id,dir` (columns located by
// name; extra columns ignored; dir is `in` or `out`). Rows may be unsorted.
Stream parse_trace(std::istream& source, TraceFormat format = TraceFormat::Csv);
Stream load_trace(const std::filesystem::path& path);

void write_trace(std::ostream& out, const Stream& s);

}  // namespace netshaper::traces
