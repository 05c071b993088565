#include "polconn/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace polconn {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

}  // namespace

CsvTable CsvTable::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaViolation(path.string(), 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

CsvTable CsvTable::parse(std::string_view text, std::string source_name) {
    CsvTable t;
    t.source_ = std::move(source_name);
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    // Fields stream straight into cells_; the first record becomes the header.
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    bool have_header = false;
    std::size_t line = 1;
    std::size_t record_line = 1;
    bool record_open = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        record_open = false;
        if (record.size() == 1 && record[0].empty()) {
            record.clear();
            return;
        }
        if (!have_header) {
            t.header_ = std::move(record);
            for (auto& h : t.header_) h = std::string(trim(h));
            have_header = true;
        } else {
            if (record.size() != t.header_.size())
                throw SchemaViolation(t.source_, record_line,
                                      "expected " + std::to_string(t.header_.size()) + " fields, found " +
                                          std::to_string(record.size()));
            for (auto& f : record) t.cells_.push_back(std::move(f));
            t.lines_.push_back(record_line);
        }
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (!record_open) {
            record_open = true;
            record_line = line;
        }
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
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
                if (!field.empty() || field_was_quoted)
                    throw SchemaViolation(t.source_, line, "stray quote inside unquoted field");
                in_quotes = true;
                field_was_quoted = true;
                break;
            case ',':
                end_field();
                break;
            case '\r':
                break;
            case '\n':
                end_record();
                ++line;
                break;
            default:
                if (field_was_quoted) throw SchemaViolation(t.source_, line, "text after closing quote");
                field.push_back(c);
        }
    }
    if (in_quotes) throw SchemaViolation(t.source_, record_line, "unterminated quoted field");
    if (record_open) end_record();
    if (!have_header) throw SchemaViolation(t.source_, 1, "missing header row");
    return t;
}

std::optional<std::size_t> CsvTable::find_column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name) return i;
    return std::nullopt;
}

std::size_t CsvTable::column(std::string_view name) const {
    if (auto c = find_column(name)) return *c;
    throw SchemaViolation(source_, 1, "missing column '" + std::string(name) + "'");
}

void CsvTable::fail(std::size_t row, const std::string& what) const {
    throw SchemaViolation(source_, lines_[row], what);
}

std::optional<double> CsvTable::optional_number(std::size_t row, std::size_t col) const {
    std::string_view s = trim(cell(row, col));
    if (s.empty()) return std::nullopt;
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
        fail(row, "column '" + header_[col] + "': not a finite number: '" + std::string(s) + "'");
    return v;
}

double CsvTable::number(std::size_t row, std::size_t col) const {
    auto v = optional_number(row, col);
    if (!v) fail(row, "column '" + header_[col] + "': value required");
    return *v;
}

std::optional<long long> CsvTable::optional_integer(std::size_t row, std::size_t col) const {
    std::string_view s = trim(cell(row, col));
    if (s.empty()) return std::nullopt;
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        fail(row, "column '" + header_[col] + "': not an integer: '" + std::string(s) + "'");
    return v;
}

long long CsvTable::integer(std::size_t row, std::size_t col) const {
    auto v = optional_integer(row, col);
    if (!v) fail(row, "column '" + header_[col] + "': value required");
    return *v;
}

int CsvTable::flag(std::size_t row, std::size_t col) const {
    std::string_view s = trim(cell(row, col));
    if (s == "0") return 0;
    if (s == "1") return 1;
    fail(row, "column '" + header_[col] + "': expected 0 or 1, found '" + std::string(s) + "'");
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n\r") != std::string::npos) {
            out << '"';
            for (char c : f) {
                if (c == '"') out << '"';
                out << c;
            }
            out << '"';
        } else {
            out << f;
        }
    }
    out << '\n';
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace polconn
