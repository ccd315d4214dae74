#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace nmq::detail {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Reads a CSV written by write_csv (no quoting, comma-separated).
CsvTable read_csv_file(const std::filesystem::path& path);

// Median with the usual even-size average.
double median_value(std::vector<double> v);

}  // namespace nmq::detail
