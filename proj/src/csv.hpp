#pragma once

#include <string>
#include <vector>

namespace dipce {

// Shortest round-trip decimal form; identical bytes for identical doubles.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

// Minimal comma-separated reader/writer. Fields in our artifacts never contain
// commas or quotes, and the writer enforces that.
CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

}  // namespace dipce
