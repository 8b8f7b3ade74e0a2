#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace povmap::csv {

using Row = std::vector<std::string>;

// RFC-4180-ish: comma separated, double-quoted fields may contain commas and "" escapes.
Row split_line(std::string_view line);
std::string join(const Row& fields);
std::string quote_if_needed(std::string_view field);

std::vector<Row> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<Row>& rows);

// Shortest text that parses back to exactly the same double.
std::string format_double(double v);
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

}  // namespace povmap::csv
