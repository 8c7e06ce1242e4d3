#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lesioncad {

struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

// Reads a comma-separated file whose first non-comment line must equal
// `header`. Lines starting with '#' are skipped. Throws IngestError.
std::vector<CsvRow> read_csv(std::istream& in, const std::vector<std::string>& header, std::string_view what);

double csv_double(const CsvRow& row, std::size_t col, std::string_view what);
long long csv_int(const CsvRow& row, std::size_t col, std::string_view what);

// Shortest round-trip formatting for doubles written to CSV/JSON-like text.
std::string format_double(double v);

}  // namespace lesioncad
