#include "polconn/report.hpp"

#include "polconn/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace polconn::report {

std::string stars(double p) {
    if (std::isnan(p)) return "";
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.1) return "*";
    return "";
}

std::string fmt_coef(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    if (v != 0.0 && std::abs(v) < 0.0005)
        std::snprintf(buf, sizeof buf, "%.3e", v);
    else
        std::snprintf(buf, sizeof buf, "%.3f", v);
    std::string s = buf;
    if (s == "-0.000") s = "0.000";
    return s;
}

std::string render_markdown(const RegressionTable& table) {
    std::vector<std::string> terms;
    bool constant = false;
    for (const auto& c : table.columns)
        for (const auto& l : c.fit.labels) {
            if (l == "Constant") {
                constant = true;
                continue;
            }
            if (std::find(terms.begin(), terms.end(), l) == terms.end()) terms.push_back(l);
        }
    if (constant) terms.push_back("Constant");

    std::ostringstream o;
    if (!table.title.empty()) o << "### " << table.title << "\n\n";
    if (!table.dependent.empty()) o << "Dependent variable: " << table.dependent << "\n\n";
    o << "| |";
    for (const auto& c : table.columns) o << ' ' << c.name << " |";
    o << "\n|---|";
    for (std::size_t i = 0; i < table.columns.size(); ++i) o << "---|";
    o << '\n';

    for (const auto& t : terms) {
        std::ostringstream coef, p;
        coef << "| " << t << " |";
        p << "| |";
        for (const auto& c : table.columns) {
            auto it = std::find(c.fit.labels.begin(), c.fit.labels.end(), t);
            if (it == c.fit.labels.end()) {
                coef << " |";
                p << " |";
                continue;
            }
            const auto j = static_cast<std::size_t>(it - c.fit.labels.begin());
            if (c.fit.omitted[j]) {
                coef << " (omitted) |";
                p << " |";
                continue;
            }
            coef << ' ' << fmt_coef(c.fit.coefficients[j]) << stars(c.fit.p_values[j]) << " |";
            p << " (" << fmt_coef(c.fit.p_values[j]) << ") |";
        }
        o << coef.str() << '\n' << p.str() << '\n';
    }

    o << "| Observations |";
    for (const auto& c : table.columns) o << ' ' << c.fit.n_obs << " |";
    o << '\n';
    if (std::any_of(table.columns.begin(), table.columns.end(), [](const Column& c) { return c.n_firms >= 0; })) {
        o << "| Number of code |";
        for (const auto& c : table.columns) o << ' ' << (c.n_firms >= 0 ? std::to_string(c.n_firms) : "") << " |";
        o << '\n';
    }
    o << "| R-squared |";
    for (const auto& c : table.columns) o << ' ' << fmt_coef(c.fit.r_squared) << " |";
    o << '\n';
    if (std::any_of(table.columns.begin(), table.columns.end(), [](const Column& c) { return !c.effects.empty(); })) {
        o << "| Industry effect |";
        for (const auto& c : table.columns) o << ' ' << c.effects << " |";
        o << '\n';
    }
    o << '\n';
    for (const auto& n : table.notes) o << n << '\n';
    if (!table.notes.empty()) o << '\n';
    return o.str();
}

void write_results_header(std::ostream& out) {
    write_csv_row(out, {"table", "column", "term", "estimate", "se", "t", "p", "omitted", "n_obs", "n_firms", "r2",
                        "r2_within", "se_type", "df_inference"});
}

void write_results_rows(std::ostream& out, const std::string& table_id, const RegressionTable& table) {
    auto num = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
    for (const auto& c : table.columns) {
        const auto& f = c.fit;
        for (std::size_t j = 0; j < f.labels.size(); ++j)
            write_csv_row(out, {table_id, c.name, f.labels[j], num(f.coefficients[j]), num(f.standard_errors[j]),
                                num(f.t_stats[j]), num(f.p_values[j]), f.omitted[j] ? "1" : "0",
                                std::to_string(f.n_obs), c.n_firms >= 0 ? std::to_string(c.n_firms) : std::string(),
                                num(f.r_squared), num(f.r_squared_within), std::string(stats::to_string(f.se_type)),
                                std::to_string(f.df_inference)});
    }
}

}  // namespace polconn::report
