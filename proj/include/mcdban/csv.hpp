#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mcdban {

// RFC 4180 style delimited text: quoted fields may contain the delimiter,
// doubled quotes and newlines. The first record is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based file line on which each row starts.
  std::vector<std::size_t> lines;

  // Index of a header column, or npos.
  std::size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text, char delimiter = ',');
CsvTable read_csv(const std::filesystem::path& path, char delimiter = ',');

std::string csv_field(std::string_view value, char delimiter = ',');

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace mcdban
