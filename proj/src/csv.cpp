#include "lesioncad/csv.hpp"

#include <charconv>
#include <cmath>
#include <istream>

#include "lesioncad/errors.hpp"

namespace lesioncad {

namespace {

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string where(std::string_view what, std::size_t line) {
    return std::string(what) + " line " + std::to_string(line);
}

}  // namespace

std::vector<CsvRow> read_csv(std::istream& in, const std::vector<std::string>& header, std::string_view what) {
    std::vector<CsvRow> rows;
    std::string line;
    std::size_t line_no = 0;
    bool seen_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        auto fields = split(line);
        if (!seen_header) {
            if (fields != header) throw IngestError(where(what, line_no) + ": unexpected header '" + line + "'");
            seen_header = true;
            continue;
        }
        if (fields.size() != header.size()) {
            throw IngestError(where(what, line_no) + ": expected " + std::to_string(header.size()) + " fields");
        }
        rows.push_back({line_no, std::move(fields)});
    }
    if (!seen_header) throw IngestError(std::string(what) + ": missing header");
    return rows;
}

double csv_double(const CsvRow& row, std::size_t col, std::string_view what) {
    const auto& s = row.fields.at(col);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw IngestError(where(what, row.line) + ": bad number '" + s + "'");
    }
    return v;
}

long long csv_int(const CsvRow& row, std::size_t col, std::string_view what) {
    const auto& s = row.fields.at(col);
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw IngestError(where(what, row.line) + ": bad integer '" + s + "'");
    }
    return v;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace lesioncad
