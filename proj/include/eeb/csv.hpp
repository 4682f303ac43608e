#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace eeb::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws IngestionError naming `context` when absent.
  [[nodiscard]] std::size_t column(std::string_view name, std::string_view context = {}) const;
};

// Comma separated, header row first, surrounding whitespace trimmed from every cell.
Table read(const std::filesystem::path& path);

double to_double(std::string_view cell, std::string_view context = {});

// Shortest representation that round-trips to the same double.
std::string format(double v);

// Quotes a cell only when it contains a comma, quote or newline.
std::string escape(std::string_view cell);

std::string join(const std::vector<std::string>& cells);

}  // namespace eeb::csv
