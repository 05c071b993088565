#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace polconn {

// Raised for malformed input files; carries file:line for diagnostics.
class SchemaViolation : public std::runtime_error {
public:
    SchemaViolation(const std::string& file, std::size_t line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}
    const std::string& file() const { return file_; }
    std::size_t line() const { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

// RFC-4180 table with a mandatory header row. Line numbers are 1-based
// physical lines of the row start, header included.
class CsvTable {
public:
    static CsvTable read(const std::filesystem::path& path);
    static CsvTable parse(std::string_view text, std::string source_name);

    const std::string& source() const { return source_; }
    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return lines_.size(); }
    std::size_t line(std::size_t row) const { return lines_[row]; }

    // Index of a required column; throws SchemaViolation naming the column.
    std::size_t column(std::string_view name) const;
    std::optional<std::size_t> find_column(std::string_view name) const;

    const std::string& cell(std::size_t row, std::size_t col) const { return cells_[row * header_.size() + col]; }

    // Typed accessors; throw SchemaViolation with the row's line number.
    double number(std::size_t row, std::size_t col) const;
    std::optional<double> optional_number(std::size_t row, std::size_t col) const;
    long long integer(std::size_t row, std::size_t col) const;
    std::optional<long long> optional_integer(std::size_t row, std::size_t col) const;
    int flag(std::size_t row, std::size_t col) const;  // 0 or 1

    [[noreturn]] void fail(std::size_t row, const std::string& what) const;

private:
    std::string source_;
    std::vector<std::string> header_;
    std::vector<std::string> cells_;  // row-major
    std::vector<std::size_t> lines_;
};

// Writes one CSV record, quoting fields that need it.
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace polconn
