#include "stereobias/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stereobias/error.hpp"

namespace stereobias::io {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string(), 0, "cannot open file");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::vector<std::string> lines;
    std::size_t start = 0;
    if (text.rfind("\xEF\xBB\xBF", 0) == 0) start = 3;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::size_t stop = end;
        if (stop > start && text[stop - 1] == '\r') --stop;
        lines.emplace_back(text.substr(start, stop - start));
        start = end + 1;
    }
    return lines;
}

std::vector<CsvRow> parse_csv(std::string_view text, const std::string& origin) {
    std::vector<CsvRow> rows;
    std::size_t pos = 0;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
    std::size_t line = 1;

    CsvRow current;
    std::string field;
    bool in_quotes = false;
    bool row_has_content = false;
    std::size_t quote_line = 0;

    auto finish_field = [&] {
        current.fields.push_back(std::move(field));
        field.clear();
    };
    auto finish_row = [&] {
        if (row_has_content || current.fields.size() > 0) {
            finish_field();
            rows.push_back(std::move(current));
        }
        current = CsvRow{};
        field.clear();
        row_has_content = false;
    };

    for (; pos < text.size(); ++pos) {
        const char c = text[pos];
        if (!row_has_content && current.fields.empty() && field.empty()) current.line = line;
        if (in_quotes) {
            if (c == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    field.push_back('"');
                    ++pos;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                quote_line = line;
                row_has_content = true;
                break;
            case ',':
                finish_field();
                row_has_content = true;
                break;
            case '\r':
                break;
            case '\n':
                finish_row();
                ++line;
                break;
            default:
                field.push_back(c);
                row_has_content = true;
        }
    }
    if (in_quotes) throw ParseError(origin, quote_line, "unterminated quoted field");
    finish_row();
    return rows;
}

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
    return parse_csv(read_file(path), path.string());
}

std::string_view trim(std::string_view text) {
    constexpr std::string_view ws = " \t\r\n";
    const auto first = text.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(ws);
    return text.substr(first, last - first + 1);
}

std::optional<double> parse_double(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return std::nullopt;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

std::optional<long long> parse_int(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return std::nullopt;
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

std::string format_double(double value) {
    if (!std::isfinite(value)) return "NA";
    if (value == 0.0) return "0";
    char buffer[64];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
    return std::string(buffer, ptr);
}

CsvWriter& CsvWriter::field(std::string_view value) {
    if (!first_) out_ << ',';
    first_ = false;
    const bool quote = value.find_first_of(",\"\n\r") != std::string_view::npos;
    if (!quote) {
        out_ << value;
        return *this;
    }
    out_ << '"';
    for (char c : value) {
        if (c == '"') out_ << '"';
        out_ << c;
    }
    out_ << '"';
    return *this;
}

CsvWriter& CsvWriter::field(double value) { return field(std::string_view(format_double(value))); }

CsvWriter& CsvWriter::field(long long value) { return field(std::string_view(std::to_string(value))); }

void CsvWriter::end_row() {
    out_ << '\n';
    first_ = true;
}

}  // namespace stereobias::io
