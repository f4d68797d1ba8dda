#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace otobias::csv {

struct Row {
  std::size_t line = 0;  // 1-based line number in the source file
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Column index for `name`, if the header has it.
  std::optional<std::size_t> column(std::string_view name) const;
};

// RFC 4180 style: comma separated, double-quoted fields may contain commas,
// quotes ("" escape) and newlines. CRLF is accepted. Blank lines are skipped.
Table parse(std::string_view text);

// Reads and parses a file; throws IoError if it cannot be read and
// ValidationError on an unterminated quote or a row whose width differs
// from the header.
Table read_file(const std::filesystem::path& path);

// Quotes a field only when it needs quoting.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace otobias::csv
