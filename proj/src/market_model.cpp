#include "polconn/market_model.hpp"

#include "polconn/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace polconn::mm {

MarketModelFit estimate_beta(std::span<const double> stock, std::span<const double> market, int min_obs) {
    if (stock.size() != market.size()) throw std::invalid_argument("stock and market series differ in length");
    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < stock.size(); ++t)
        if (!is_missing(stock[t]) && !is_missing(market[t])) rows.push_back(t);
    const int n = static_cast<int>(rows.size());
    if (n < std::max(min_obs, 3))
        throw stats::InsufficientObservations("market model needs " + std::to_string(std::max(min_obs, 3)) +
                                              " paired days, found " + std::to_string(n));
    stats::DesignMatrix X;
    X.labels = {"alpha", "beta"};
    X.has_intercept = true;
    X.values.resize(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X.values(i, 0) = 1.0;
        X.values(i, 1) = market[rows[static_cast<std::size_t>(i)]];
        y(i) = stock[rows[static_cast<std::size_t>(i)]];
    }
    const auto fit = stats::ols_fit(X, y);
    MarketModelFit out;
    out.alpha = fit.coefficients[0];
    out.beta = fit.coefficients[1];
    out.n_obs = n;
    out.r_squared = fit.r_squared;
    return out;
}

std::vector<double> abnormal_returns(const MarketModelFit& fit, std::span<const double> stock,
                                     std::span<const double> market, bool subtract_alpha) {
    if (stock.size() != market.size()) throw std::invalid_argument("stock and market series differ in length");
    std::vector<double> ar(stock.size(), kMissing);
    for (std::size_t t = 0; t < stock.size(); ++t) {
        if (is_missing(stock[t]) || is_missing(market[t])) continue;
        ar[t] = stock[t] - fit.beta * market[t] - (subtract_alpha ? fit.alpha : 0.0);
    }
    return ar;
}

CarValue car(std::span<const double> ar, int a, int b) {
    const int n = static_cast<int>(ar.size());
    if (a < 0 || b < a || b > n)
        throw WindowOutOfRange("window [" + std::to_string(a) + "," + std::to_string(b) + "] outside days 0.." +
                               std::to_string(n));
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(b - a + 1));
    for (int d = std::max(a, 1); d <= b; ++d) {
        const double v = ar[static_cast<std::size_t>(d - 1)];
        if (!is_missing(v)) terms.push_back(v);
    }
    return {stats::stable_sum(terms), static_cast<int>(terms.size())};
}

std::vector<MarketModelFit> estimate_betas(const ReturnPanel& panel, DateRange estimation, IndexSeries market,
                                           int min_obs, unsigned threads, std::vector<bool>* fitted) {
    const auto [b, e] = panel.calendar.span_of(estimation);
    const auto& m = panel.index_series(market);
    const std::span<const double> mk(m.data() + b, e - b);
    std::vector<MarketModelFit> fits(panel.tickers.size());
    std::vector<char> ok(panel.tickers.size(), 0);
    parallel_for(panel.tickers.size(), threads, [&](std::size_t f) {
        MarketModelFit fit;
        try {
            fit = estimate_beta(std::span<const double>(panel.returns[f].data() + b, e - b), mk, min_obs);
            ok[f] = 1;
        } catch (const stats::EstimationError&) {
            fit.alpha = fit.beta = fit.r_squared = kMissing;
        }
        fit.ticker = panel.tickers[f];
        fit.estimation_window = estimation;
        fits[f] = std::move(fit);
    });
    if (fitted) fitted->assign(ok.begin(), ok.end());
    return fits;
}

AbnormalPanel build_abnormal_panel(const ReturnPanel& panel, const StudyDays& study, DateRange estimation,
                                   IndexSeries market, const MarketModelOptions& options) {
    if (!(estimation.last < study.date(1)))
        throw std::invalid_argument("estimation window must end before the first study day");
    AbnormalPanel out;
    out.tickers = panel.tickers;
    out.dates = study.dates();
    std::vector<bool> fitted;
    out.fits = estimate_betas(panel, estimation, market, options.min_obs, options.threads, &fitted);
    out.fitted = fitted;

    const std::size_t b = study.first_position(), e = study.end_position();
    const auto& m = panel.index_series(market);
    const std::span<const double> mk(m.data() + b, e - b);
    out.ar.assign(panel.tickers.size(), std::vector<double>(e - b, kMissing));
    parallel_for(panel.tickers.size(), options.threads, [&](std::size_t f) {
        if (!out.fitted[f]) return;
        out.ar[f] = abnormal_returns(out.fits[f], std::span<const double>(panel.returns[f].data() + b, e - b), mk,
                                     options.subtract_alpha);
    });
    const auto unfitted = static_cast<std::size_t>(std::count(out.fitted.begin(), out.fitted.end(), false));
    if (unfitted) out.drops.add("market model: fewer than " + std::to_string(options.min_obs) + " estimation days", unfitted);
    if (options.winsorize > 0.0) winsorize(out, options.winsorize);
    return out;
}

void winsorize(AbnormalPanel& panel, double q) {
    if (!(q > 0.0 && q < 0.5)) throw std::invalid_argument("winsorize tail probability must lie in (0, 0.5)");
    std::vector<double> all;
    for (const auto& row : panel.ar)
        for (double v : row)
            if (!is_missing(v)) all.push_back(v);
    if (all.size() < 2) return;
    std::sort(all.begin(), all.end());
    auto quantile = [&](double p) {
        const double h = (static_cast<double>(all.size()) - 1.0) * p;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, all.size() - 1);
        return all[lo] + (h - static_cast<double>(lo)) * (all[hi] - all[lo]);
    };
    const double lo = quantile(q), hi = quantile(1.0 - q);
    std::size_t clamped = 0;
    for (auto& row : panel.ar)
        for (double& v : row)
            if (!is_missing(v) && (v < lo || v > hi)) {
                v = std::clamp(v, lo, hi);
                ++clamped;
            }
    panel.drops.add("winsorized AR values", clamped);
}

void write_betas_csv(std::ostream& out, const std::vector<MarketModelFit>& fits, const std::vector<bool>& fitted) {
    write_csv_row(out, {"ticker", "alpha", "beta", "n_obs", "r2"});
    for (std::size_t i = 0; i < fits.size(); ++i) {
        const auto& f = fits[i];
        if (!fitted[i]) {
            write_csv_row(out, {f.ticker, "", "", std::to_string(f.n_obs), ""});
            continue;
        }
        write_csv_row(out, {f.ticker, format_double(f.alpha), format_double(f.beta), std::to_string(f.n_obs),
                            format_double(f.r_squared)});
    }
}

void write_ar_panel_csv(std::ostream& out, const AbnormalPanel& panel) {
    write_csv_row(out, {"ticker", "date", "ar"});
    for (std::size_t f = 0; f < panel.tickers.size(); ++f)
        for (std::size_t d = 0; d < panel.dates.size(); ++d)
            if (!is_missing(panel.ar[f][d])) write_csv_row(out, {panel.tickers[f], panel.dates[d].iso(), format_double(panel.ar[f][d])});
}

}  // namespace polconn::mm
