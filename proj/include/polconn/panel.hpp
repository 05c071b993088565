#pragma once

#include "polconn/core_stats.hpp"
#include "polconn/ingest.hpp"
#include "polconn/market_model.hpp"

#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace polconn::panel {

class EmptyPeriod : public stats::EstimationError {
public:
    using stats::EstimationError::EstimationError;
};

struct PanelRow {
    int firm = 0;  // index into Panel::tickers
    int day = 0;   // study day, 1-based
    double ar = kMissing;
    double protests = 0.0;
    double stdprotests = 0.0;
    double worldchange = kMissing;
    double shindex = kMissing;
    double size = kMissing;
    double leverage = kMissing;
    double inverse_pe = kMissing;
    double turnover = kMissing;
    double ar_lag1 = kMissing;
    double ar_lag2 = kMissing;
};

struct Panel {
    std::vector<std::string> tickers;
    std::vector<FirmConnection> flags;
    std::vector<std::string> industry;
    std::vector<Date> dates;  // dates[d - 1] is day d
    std::vector<PanelRow> rows;  // sorted by (firm, day)
    // Firm-level covariates by name (e.g. occupybeta'), one value per firm.
    std::map<std::string, std::vector<double>> firm_covariates;

    int days() const { return static_cast<int>(dates.size()); }
};

// One row per stock-day with AR present. Lags come from the same stock's
// previous study days (missing on days 1-2 or after a gap). size and
// leverage carry forward their last reported value; 1/PE and turnover are
// same-day only.
Panel build_panel(const mm::AbnormalPanel& ar, const ProtestSeries& protests, const Dataset& ds,
                  const StudyDays& study);

enum class MarketControl { worldchange, shindex };
enum class Period { full, pre, post };
enum class FixedEffects { industry, entity, none };

std::string_view to_string(MarketControl m);
std::string_view to_string(Period p);
std::string_view to_string(FixedEffects f);

struct PanelModelSpec {
    std::string name;
    std::vector<std::string> flags;         // level dummies
    std::vector<std::string> interactions;  // each enters as stdprotests*<flag>
    bool stdprotests = true;
    MarketControl market = MarketControl::worldchange;
    bool controls = true;  // size, leverage, 1/PE, turnover, AR lags
    Period period = Period::full;
    int split_day = 85;  // first post-period day
    FixedEffects fe = FixedEffects::industry;
    stats::SeType se = stats::SeType::classical;
    std::vector<std::string> covariates;              // firm covariates, levels
    std::vector<std::string> covariate_interactions;  // stdprotests*<covariate>
    bool omit_zero_columns = false;
    // Firms allowed into the model; empty = all.
    std::vector<bool> firm_mask;
};

struct PanelModelResult {
    PanelModelSpec spec;
    stats::OlsFit fit;
    int n_firms = 0;
    std::size_t rows_in_period = 0;
    std::size_t rows_missing = 0;  // period rows lacking a regressor
    std::vector<std::string> dropped_terms;  // eliminated by entity FE
};

// Regressor labels in table order for a spec.
std::vector<std::string> design_labels(const PanelModelSpec& spec);

PanelModelResult run_panel_model(const Panel& panel, const PanelModelSpec& spec);

// Rows whose day lies in the spec period; independent of missing data.
std::vector<std::size_t> period_rows(const Panel& panel, Period period, int split_day);

// Seven columns over the three flag pairs.
std::vector<PanelModelSpec> table_presets(Period period, MarketControl market, stats::SeType se, int split_day = 85);

struct SensitivityBeta {
    std::string ticker;
    double occupybeta = 0.0;
    bool fitted = false;
    double occupybeta_prime = 0.0;
    int n_obs = 0;
};

// Per-stock OLS of occupy-period AR on raw daily protest counts. Stocks
// with fewer than min_obs usable days are left unfitted.
std::vector<SensitivityBeta> occupy_sensitivity(const mm::AbnormalPanel& occupy_ar, std::span<const long long> protests,
                                                int min_obs = 30, unsigned threads = 1);

enum class SensitivityVariant { fitted_only, zero_filled, as_control };

// Adds occupybeta / occupybeta' to the panel and returns the model specs:
// fitted_only and zero_filled give two columns (level, level +
// interaction), as_control the seven preset columns with occupybeta' appended.
std::vector<PanelModelSpec> sensitivity_specs(Panel& panel, std::span<const SensitivityBeta> sens,
                                              SensitivityVariant variant, stats::SeType se);

void write_panel_csv(std::ostream& out, const Panel& panel);
void write_sensitivity_csv(std::ostream& out, std::span<const SensitivityBeta> sens);

}  // namespace polconn::panel
