#pragma once

#include "polconn/core_stats.hpp"
#include "polconn/ingest.hpp"

#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace polconn::mm {

class WindowOutOfRange : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

struct MarketModelFit {
    std::string ticker;
    double alpha = 0.0;  // % per day
    double beta = 0.0;
    DateRange estimation_window;
    int n_obs = 0;
    double r_squared = 0.0;
};

// OLS of stock on market with intercept over days where both are present.
// Throws stats::InsufficientObservations below min_obs paired days.
MarketModelFit estimate_beta(std::span<const double> stock, std::span<const double> market, int min_obs = 60);

// AR_t = R_t - beta R_Mt (minus alpha too when subtract_alpha). Missing in,
// missing out.
std::vector<double> abnormal_returns(const MarketModelFit& fit, std::span<const double> stock,
                                     std::span<const double> market, bool subtract_alpha = false);

struct CarValue {
    double value = 0.0;
    int days = 0;  // non-missing days summed
};

// ar[d - 1] holds day d. Sums days max(a, 1)..b, skipping missing values.
// Requires 0 <= a <= b <= ar.size().
CarValue car(std::span<const double> ar, int a, int b);

struct MarketModelOptions {
    int min_obs = 60;
    bool subtract_alpha = false;
    // Symmetric pooled winsorization of AR at this tail probability; 0 = off.
    double winsorize = 0.0;
    unsigned threads = 1;
};

// Abnormal returns for every panel stock over a window of study days.
// Stocks whose estimation fails keep an all-missing AR row.
struct AbnormalPanel {
    std::vector<std::string> tickers;  // same order as the source panel
    std::vector<Date> dates;           // dates[d - 1] is day d
    std::vector<std::vector<double>> ar;
    std::vector<MarketModelFit> fits;
    std::vector<bool> fitted;
    DropReport drops;

    int days() const { return static_cast<int>(dates.size()); }
};

AbnormalPanel build_abnormal_panel(const ReturnPanel& panel, const StudyDays& study, DateRange estimation,
                                   IndexSeries market, const MarketModelOptions& options = {});

// Per-stock betas against `market` over the estimation window (worldbeta
// style); unfitted stocks get NaN.
std::vector<MarketModelFit> estimate_betas(const ReturnPanel& panel, DateRange estimation, IndexSeries market,
                                           int min_obs, unsigned threads, std::vector<bool>* fitted = nullptr);

// Clamp all non-missing AR to the [q, 1-q] pooled quantiles (type-7).
void winsorize(AbnormalPanel& panel, double q);

void write_betas_csv(std::ostream& out, const std::vector<MarketModelFit>& fits, const std::vector<bool>& fitted);
void write_ar_panel_csv(std::ostream& out, const AbnormalPanel& panel);

}  // namespace polconn::mm
