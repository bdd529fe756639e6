#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace stereobias::io {

struct CsvRow {
    std::size_t line = 0;  // 1-based line where the record starts
    std::vector<std::string> fields;
};

/// Parses RFC-4180-style CSV (quoted fields, doubled quotes, CRLF, UTF-8 BOM).
/// Blank lines are skipped. Throws ParseError on an unterminated quote.
std::vector<CsvRow> read_csv(const std::filesystem::path& path);
std::vector<CsvRow> parse_csv(std::string_view text, const std::string& origin);

/// Reads a text file into lines with the trailing CR stripped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Throws ParseError(path, 0, "cannot open ...") if the file is unreadable.
std::string read_file(const std::filesystem::path& path);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

/// Shortest decimal that round-trips; non-finite values print as "NA".
std::string format_double(double value);

std::string_view trim(std::string_view text);

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    CsvWriter& field(std::string_view value);
    CsvWriter& field(double value);
    CsvWriter& field(long long value);
    CsvWriter& field(int value) { return field(static_cast<long long>(value)); }
    CsvWriter& field(std::size_t value) { return field(static_cast<long long>(value)); }
    CsvWriter& field(bool value) { return field(value ? std::string_view("true") : std::string_view("false")); }
    CsvWriter& field(const char* value) { return field(std::string_view(value)); }
    CsvWriter& field(const std::string& value) { return field(std::string_view(value)); }
    void end_row();

    template <typename... Ts>
    void row(const Ts&... values) {
        (field(values), ...);
        end_row();
    }

private:
    std::ostream& out_;
    bool first_ = true;
};

}  // namespace stereobias::io
