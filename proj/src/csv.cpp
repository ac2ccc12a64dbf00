#include "csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace dipce {

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return int(i);
  }
  return -1;
}

static std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open csv for reading: " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Parse, "empty csv: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = split_line(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size()) {
      fail(ErrorCode::Parse, "ragged csv row in " + path);
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ostringstream out;
  auto emit_row = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::string& f = fields[i];
      if (f.find(',') != std::string::npos || f.find('"') != std::string::npos ||
          f.find('\n') != std::string::npos) {
        fail(ErrorCode::InvalidArgument, "csv field needs quoting: " + f);
      }
      if (i) out << ',';
      out << f;
    }
    out << '\n';
  };
  emit_row(table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) {
      fail(ErrorCode::ShapeMismatch, "csv row width differs from header");
    }
    emit_row(row);
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::Io, "cannot open csv for writing: " + path);
  file << out.str();
  if (!file) fail(ErrorCode::Io, "short write: " + path);
}

}  // namespace dipce
