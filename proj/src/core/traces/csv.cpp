#include "traces/csv.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "common/error.hpp"

namespace netshaper::traces {

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    auto cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                   : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
    out.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename Int>
std::optional<Int> to_int(std::string_view s) {
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

Stream parse_trace(std::istream& source, TraceFormat /*format*/) {
  constexpr std::array<std::string_view, 4> kColumns{"t_ns", "len_bytes", "flow_id", "dir"};
  std::array<std::size_t, 4> index{};

  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<PacketRecord> records;

  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (!have_header) {
      for (std::size_t c = 0; c < kColumns.size(); ++c) {
        auto it = std::find(cells.begin(), cells.end(), kColumns[c]);
        if (it == cells.end()) {
          throw ParseError(line_no, "missing column '" + std::string(kColumns[c]) + "'");
        }
        index[c] = static_cast<std::size_t>(it - cells.begin());
      }
      have_header = true;
      continue;
    }
    for (auto i : index) {
      if (i >= cells.size()) throw ParseError(line_no, "too few fields");
    }
    auto t = to_int<std::int64_t>(cells[index[0]]);
    auto len = to_int<std::int64_t>(cells[index[1]]);
    auto flow = to_int<std::uint32_t>(cells[index[2]]);
    if (!t) throw ParseError(line_no, "bad t_ns '" + std::string(cells[index[0]]) + "'");
    if (!len) throw ParseError(line_no, "bad len_bytes '" + std::string(cells[index[1]]) + "'");
    if (!flow) throw ParseError(line_no, "bad flow_id '" + std::string(cells[index[2]]) + "'");
    auto dir_text = cells[index[3]];
    Direction dir;
    if (dir_text == "in") {
      dir = Direction::Inbound;
    } else if (dir_text == "out") {
      dir = Direction::Outbound;
    } else {
      throw ParseError(line_no, "bad dir '" + std::string(dir_text) + "'");
    }
    if (*len < 1) {
      fail(ErrorKind::Validation,
           "line " + std::to_string(line_no) + ": len_bytes must be positive");
    }
    if (*t < 0) {
      fail(ErrorKind::Validation, "line " + std::to_string(line_no) + ": t_ns must be >= 0");
    }
    records.push_back({*t, *len, *flow, dir});
  }
  if (!have_header) throw ParseError(line_no + 1, "missing header");
  return Stream(std::move(records));
}

Stream load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open trace '" + path.string() + "'");
  return parse_trace(in);
}

void write_trace(std::ostream& out, const Stream& s) {
  out << "t_ns,len_bytes,flow_id,dir\n";
  for (const auto& r : s.records()) {
    out << r.t << ',' << r.len << ',' << r.flow_id << ','
        << (r.dir == Direction::Inbound ? "in" : "out") << '\n';
  }
}

}  // namespace netshaper::traces
