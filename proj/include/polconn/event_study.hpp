#pragma once

#include "polconn/core_stats.hpp"
#include "polconn/ingest.hpp"
#include "polconn/market_model.hpp"

#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace polconn::es {

class EmptySpecification : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DateAfterWindow : public DataError {
public:
    using DataError::DataError;
};

// Day number (1-based) of the first study trading day on or after `date`.
int anchor_event(Date date, const StudyDays& study);

struct Window {
    int a = 0;
    int b = 0;
    std::string label() const { return "CAR[" + std::to_string(a) + "," + std::to_string(b) + "]"; }
};

// Firm-level regressors for the cross-sectional regressions.
struct CrossSection {
    std::vector<std::string> tickers;
    std::vector<FirmConnection> flags;
    std::vector<std::string> industry;
    std::vector<double> worldbeta;
    // Per study day (index d - 1) size and leverage: last value on or before
    // the day, else the first value after it.
    std::vector<std::vector<double>> size;
    std::vector<std::vector<double>> leverage;
};

CrossSection build_cross_section(const Dataset& ds, const StudyDays& study, std::span<const double> worldbeta);

struct EventRegressionResult {
    std::string event;
    Date date;
    int anchor = 0;
    int halfwidth = 0;  // 0 for a fixed period window
    Window window;
    std::vector<std::string> flag_set;
    stats::OlsFit fit;
    int n_dropped = 0;  // firms lacking CAR days or a control
};

struct EventOptions {
    stats::SeType se = stats::SeType::classical;
    // Report worldbeta, size and leverage beside the flags.
    bool controls = true;
};

// OLS of the per-firm CAR on the flags plus worldbeta, size and leverage
// (taken at `control_day`), industry dummies absorbed.
EventRegressionResult event_regression(std::span<const mm::CarValue> car, const CrossSection& cs,
                                       std::span<const std::string> flag_set, int control_day,
                                       const EventOptions& options = {});

std::vector<std::vector<std::string>> default_flag_sets();

struct EventSuite {
    std::vector<EventRegressionResult> results;
    std::vector<std::string> warnings;
};

// One regression per event x half-width x flag set, sorted by event date
// then window size. Windows leaving [0, study days] are skipped with a
// warning.
EventSuite run_event_suite(std::span<const EventSpec> events, const mm::AbnormalPanel& ar, const CrossSection& cs,
                           const std::vector<std::vector<std::string>>& flag_sets, const StudyDays& study,
                           const EventOptions& options = {}, unsigned threads = 1);

// Whole-window and split sub-period CARs: [0,n], [0,split-1], [split,n].
EventSuite run_period_suite(const mm::AbnormalPanel& ar, const CrossSection& cs,
                            const std::vector<std::vector<std::string>>& flag_sets, int split_day,
                            const EventOptions& options = {}, unsigned threads = 1);

void write_event_results_csv(std::ostream& out, const EventSuite& suite);

}  // namespace polconn::es
