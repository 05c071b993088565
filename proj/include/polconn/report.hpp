#pragma once

#include "polconn/core_stats.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace polconn::report {

struct Column {
    std::string name;  // "(1)", "CAR[84,86]", ...
    stats::OlsFit fit;
    int n_firms = -1;  // -1: no "Number of code" line
    std::string effects;  // e.g. "Yes" for industry effects, empty to omit
};

struct RegressionTable {
    std::string title;
    std::string dependent;
    std::vector<Column> columns;
    std::vector<std::string> notes;
};

// *** p<0.01, ** p<0.05, * p<0.1.
std::string stars(double p);
// Three decimals; scientific for tiny nonzero values so they stay visible.
std::string fmt_coef(double v);

// Coefficients with stars over p-values in parentheses, one row per term in
// first-appearance order (Constant last), then observations, firms, R^2.
std::string render_markdown(const RegressionTable& table);

void write_results_header(std::ostream& out);
// Long format: one row per table x column x term.
void write_results_rows(std::ostream& out, const std::string& table_id, const RegressionTable& table);

}  // namespace polconn::report
