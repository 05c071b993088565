#include "polconn/panel.hpp"

#include "polconn/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace polconn::panel {

namespace {

std::vector<double> carry_forward(const std::vector<double>& full, std::size_t first, std::size_t end) {
    std::vector<double> out(end - first, kMissing);
    double last = kMissing;
    for (std::size_t p = 0; p < end; ++p) {
        if (!is_missing(full[p])) last = full[p];
        if (p >= first) out[p - first] = last;
    }
    return out;
}

bool is_flag(std::string_view name) {
    return std::find(std::begin(kFlagNames), std::end(kFlagNames), name) != std::end(kFlagNames);
}

std::string market_label(MarketControl m) { return std::string(to_string(m)); }

}  // namespace

std::string_view to_string(MarketControl m) { return m == MarketControl::worldchange ? "worldchange" : "shindex"; }

std::string_view to_string(Period p) {
    switch (p) {
        case Period::full: return "full";
        case Period::pre: return "pre";
        case Period::post: return "post";
    }
    return "full";
}

std::string_view to_string(FixedEffects f) {
    switch (f) {
        case FixedEffects::industry: return "industry";
        case FixedEffects::entity: return "entity";
        case FixedEffects::none: return "none";
    }
    return "industry";
}

Panel build_panel(const mm::AbnormalPanel& ar, const ProtestSeries& protests, const Dataset& ds,
                  const StudyDays& study) {
    const auto& src = ds.panel;
    if (ar.tickers != src.tickers) throw CalendarMismatch("abnormal-return panel and dataset disagree on tickers");
    if (protests.dates != ar.dates || study.dates() != ar.dates)
        throw CalendarMismatch("protest series, study days and abnormal returns are not on the same calendar");

    Panel p;
    p.tickers = src.tickers;
    p.flags = ds.flags;
    for (const auto& t : p.tickers) p.industry.push_back(ds.industry.at(t));
    p.dates = ar.dates;

    const std::size_t first = study.first_position(), end = study.end_position();
    const auto& world = src.index_series(IndexSeries::MSCI_WORLD);
    const auto& sh = src.index_series(IndexSeries::SH_COMP);
    const int n_days = p.days();
    for (std::size_t f = 0; f < p.tickers.size(); ++f) {
        const auto& c = src.controls[f];
        const auto size = carry_forward(c.size, first, end);
        const auto lev = carry_forward(c.leverage, first, end);
        const auto& a = ar.ar[f];
        for (int d = 1; d <= n_days; ++d) {
            const auto i = static_cast<std::size_t>(d - 1);
            if (is_missing(a[i])) continue;
            const std::size_t pos = first + i;
            PanelRow r;
            r.firm = static_cast<int>(f);
            r.day = d;
            r.ar = a[i];
            r.protests = static_cast<double>(protests.protests[i]);
            r.stdprotests = protests.stdprotests[i];
            r.worldchange = world[pos];
            r.shindex = sh[pos];
            r.size = size[i];
            r.leverage = lev[i];
            r.inverse_pe = c.inverse_pe[pos];
            r.turnover = c.turnover[pos];
            if (d >= 2) r.ar_lag1 = a[i - 1];
            if (d >= 3) r.ar_lag2 = a[i - 2];
            p.rows.push_back(r);
        }
    }
    return p;
}

std::vector<std::string> design_labels(const PanelModelSpec& spec) {
    std::vector<std::string> l;
    if (spec.stdprotests) l.push_back("stdprotests");
    for (const auto& f : spec.flags) l.push_back(f);
    for (const auto& f : spec.interactions) l.push_back("stdprotests*" + f);
    for (const auto& c : spec.covariates) l.push_back(c);
    for (const auto& c : spec.covariate_interactions) l.push_back("stdprotests*" + c);
    l.push_back(market_label(spec.market));
    if (spec.controls) l.insert(l.end(), {"size", "leverage", "1/PE", "turnover", "AR_lag1", "AR_lag2"});
    return l;
}

std::vector<std::size_t> period_rows(const Panel& panel, Period period, int split_day) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < panel.rows.size(); ++i) {
        const int d = panel.rows[i].day;
        if (period == Period::pre && d >= split_day) continue;
        if (period == Period::post && d < split_day) continue;
        out.push_back(i);
    }
    return out;
}

PanelModelResult run_panel_model(const Panel& panel, const PanelModelSpec& spec) {
    for (const auto& f : spec.flags)
        if (!is_flag(f)) throw std::invalid_argument("unknown connection flag '" + f + "'");
    for (const auto& f : spec.interactions)
        if (!is_flag(f)) throw std::invalid_argument("unknown connection flag '" + f + "'");
    std::vector<const std::vector<double>*> cov, cov_x;
    for (const auto& c : spec.covariates) {
        auto it = panel.firm_covariates.find(c);
        if (it == panel.firm_covariates.end()) throw std::invalid_argument("unknown firm covariate '" + c + "'");
        cov.push_back(&it->second);
    }
    for (const auto& c : spec.covariate_interactions) {
        auto it = panel.firm_covariates.find(c);
        if (it == panel.firm_covariates.end()) throw std::invalid_argument("unknown firm covariate '" + c + "'");
        cov_x.push_back(&it->second);
    }
    if (!spec.firm_mask.empty() && spec.firm_mask.size() != panel.tickers.size())
        throw std::invalid_argument("firm mask must have one entry per firm");

    PanelModelResult res;
    res.spec = spec;
    std::vector<std::string> labels = design_labels(spec);
    const std::size_t k = labels.size();

    // Regressor values for one row, in label order; false if any is missing.
    std::vector<double> buf(k);
    auto fill = [&](const PanelRow& r) {
        const auto& fl = panel.flags[static_cast<std::size_t>(r.firm)];
        std::size_t c = 0;
        if (spec.stdprotests) buf[c++] = r.stdprotests;
        for (const auto& f : spec.flags) buf[c++] = fl.flag(f);
        for (const auto& f : spec.interactions) buf[c++] = r.stdprotests * fl.flag(f);
        for (const auto* v : cov) buf[c++] = (*v)[static_cast<std::size_t>(r.firm)];
        for (const auto* v : cov_x) buf[c++] = r.stdprotests * (*v)[static_cast<std::size_t>(r.firm)];
        buf[c++] = spec.market == MarketControl::worldchange ? r.worldchange : r.shindex;
        if (spec.controls) {
            buf[c++] = r.size;
            buf[c++] = r.leverage;
            buf[c++] = r.inverse_pe;
            buf[c++] = r.turnover;
            buf[c++] = r.ar_lag1;
            buf[c++] = r.ar_lag2;
        }
        if (is_missing(r.ar)) return false;
        return std::none_of(buf.begin(), buf.end(), [](double v) { return is_missing(v); });
    };

    std::vector<std::size_t> rows;
    for (std::size_t i : period_rows(panel, spec.period, spec.split_day)) {
        const auto& r = panel.rows[i];
        if (!spec.firm_mask.empty() && !spec.firm_mask[static_cast<std::size_t>(r.firm)]) continue;
        ++res.rows_in_period;
        if (fill(r))
            rows.push_back(i);
        else
            ++res.rows_missing;
    }
    if (rows.empty())
        throw EmptyPeriod("model '" + spec.name + "': no usable rows in period " + std::string(to_string(spec.period)));

    const auto n = static_cast<Eigen::Index>(rows.size());
    stats::DesignMatrix X;
    X.values.resize(n, static_cast<Eigen::Index>(k));
    Eigen::VectorXd y(n);
    std::vector<int> firm(rows.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = panel.rows[rows[static_cast<std::size_t>(i)]];
        fill(r);
        for (std::size_t j = 0; j < k; ++j) X.values(i, static_cast<Eigen::Index>(j)) = buf[j];
        y(i) = r.ar;
        firm[static_cast<std::size_t>(i)] = r.firm;
    }
    res.n_firms = static_cast<int>(std::set<int>(firm.begin(), firm.end()).size());

    std::vector<int> groups(rows.size());
    if (spec.fe == FixedEffects::entity) {
        // Drop regressors constant within every firm: the firm dummies span them.
        std::vector<Eigen::Index> keep;
        for (std::size_t j = 0; j < k; ++j) {
            bool varies = false;
            for (Eigen::Index i = 1; i < n && !varies; ++i)
                varies = firm[static_cast<std::size_t>(i)] == firm[static_cast<std::size_t>(i - 1)] &&
                         X.values(i, static_cast<Eigen::Index>(j)) != X.values(i - 1, static_cast<Eigen::Index>(j));
            if (varies)
                keep.push_back(static_cast<Eigen::Index>(j));
            else
                res.dropped_terms.push_back(labels[j]);
        }
        stats::DesignMatrix Z;
        Z.values.resize(n, static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) {
            Z.values.col(static_cast<Eigen::Index>(j)) = X.values.col(keep[j]);
            Z.labels.push_back(labels[static_cast<std::size_t>(keep[j])]);
        }
        X = std::move(Z);
        groups = firm;
    } else if (spec.fe == FixedEffects::industry) {
        std::set<std::string> names(panel.industry.begin(), panel.industry.end());
        const std::vector<std::string> sorted(names.begin(), names.end());
        for (std::size_t i = 0; i < rows.size(); ++i)
            groups[i] = static_cast<int>(
                std::lower_bound(sorted.begin(), sorted.end(), panel.industry[static_cast<std::size_t>(firm[i])]) -
                sorted.begin());
        X.labels = labels;
    } else {
        X.labels = labels;
    }

    stats::OlsOptions o;
    o.se = spec.se;
    o.omit_zero_columns = spec.omit_zero_columns;
    if (spec.se == stats::SeType::cluster) o.clusters = firm;
    if (spec.fe == FixedEffects::none) {
        stats::DesignMatrix W;
        W.has_intercept = true;
        W.labels.push_back("Constant");
        W.labels.insert(W.labels.end(), X.labels.begin(), X.labels.end());
        W.values.resize(n, X.values.cols() + 1);
        W.values.col(0).setOnes();
        W.values.rightCols(X.values.cols()) = X.values;
        res.fit = stats::ols_fit(W, y, o);
    } else {
        res.fit = stats::ols_fit_absorbed(X, y, groups, o);
    }
    return res;
}

std::vector<PanelModelSpec> table_presets(Period period, MarketControl market, stats::SeType se, int split_day) {
    const std::pair<std::string, std::string> pairs[] = {
        {"proestablish", "pandemo"}, {"H", "red"}, {"centralcontrol", "chinaasset"}};
    std::vector<PanelModelSpec> out;
    auto base = [&](std::string name) {
        PanelModelSpec s;
        s.name = std::move(name);
        s.period = period;
        s.market = market;
        s.se = se;
        s.split_day = split_day;
        return s;
    };
    out.push_back(base("(1)"));
    int col = 2;
    for (const auto& [a, b] : pairs) {
        auto levels = base("(" + std::to_string(col++) + ")");
        levels.flags = {a, b};
        out.push_back(levels);
        auto inter = base("(" + std::to_string(col++) + ")");
        inter.flags = {a, b};
        inter.interactions = {a, b};
        out.push_back(inter);
    }
    return out;
}

std::vector<SensitivityBeta> occupy_sensitivity(const mm::AbnormalPanel& occupy_ar, std::span<const long long> protests,
                                                int min_obs, unsigned threads) {
    if (protests.size() != occupy_ar.dates.size())
        throw std::invalid_argument("occupy protest series must cover every occupy-window day");
    std::vector<SensitivityBeta> out(occupy_ar.tickers.size());
    parallel_for(out.size(), threads, [&](std::size_t f) {
        SensitivityBeta s;
        s.ticker = occupy_ar.tickers[f];
        const auto& a = occupy_ar.ar[f];
        std::vector<std::size_t> rows;
        for (std::size_t t = 0; t < a.size(); ++t)
            if (!is_missing(a[t])) rows.push_back(t);
        s.n_obs = static_cast<int>(rows.size());
        if (s.n_obs >= std::max(min_obs, 3)) {
            stats::DesignMatrix X;
            X.labels = {"Constant", "protests"};
            X.has_intercept = true;
            X.values.resize(s.n_obs, 2);
            Eigen::VectorXd y(s.n_obs);
            for (int i = 0; i < s.n_obs; ++i) {
                X.values(i, 0) = 1.0;
                X.values(i, 1) = static_cast<double>(protests[rows[static_cast<std::size_t>(i)]]);
                y(i) = a[rows[static_cast<std::size_t>(i)]];
            }
            try {
                s.occupybeta = stats::ols_fit(X, y).coefficients[1];
                s.fitted = true;
            } catch (const stats::EstimationError&) {
                s.fitted = false;
            }
        }
        if (!s.fitted) s.occupybeta = kMissing;
        s.occupybeta_prime = s.fitted ? s.occupybeta : 0.0;
        out[f] = std::move(s);
    });
    return out;
}

std::vector<PanelModelSpec> sensitivity_specs(Panel& panel, std::span<const SensitivityBeta> sens,
                                              SensitivityVariant variant, stats::SeType se) {
    if (sens.size() != panel.tickers.size()) throw std::invalid_argument("one sensitivity beta per firm required");
    std::vector<double> beta(sens.size()), prime(sens.size());
    std::vector<bool> fitted(sens.size());
    for (std::size_t f = 0; f < sens.size(); ++f) {
        if (sens[f].ticker != panel.tickers[f]) throw std::invalid_argument("sensitivity betas out of firm order");
        beta[f] = sens[f].fitted ? sens[f].occupybeta : kMissing;
        prime[f] = sens[f].occupybeta_prime;
        fitted[f] = sens[f].fitted;
    }
    panel.firm_covariates["occupybeta"] = beta;
    panel.firm_covariates["occupybeta'"] = prime;

    std::vector<PanelModelSpec> out;
    if (variant == SensitivityVariant::as_control) {
        out = table_presets(Period::full, MarketControl::worldchange, se);
        for (auto& s : out) {
            s.covariates = {"occupybeta'"};
            s.omit_zero_columns = true;
        }
        return out;
    }
    const bool only = variant == SensitivityVariant::fitted_only;
    const std::string name = only ? "occupybeta" : "occupybeta'";
    for (int c = 0; c < 2; ++c) {
        PanelModelSpec s;
        s.name = "(" + std::to_string(c + 1 + (only ? 0 : 2)) + ")";
        s.se = se;
        s.covariates = {name};
        if (c == 1) s.covariate_interactions = {name};
        if (only) s.firm_mask = fitted;
        s.omit_zero_columns = true;
        out.push_back(std::move(s));
    }
    return out;
}

void write_panel_csv(std::ostream& out, const Panel& panel) {
    std::vector<std::string> header{"ticker", "date", "day", "ar", "protests", "stdprotests"};
    for (auto f : kFlagNames) header.emplace_back(f);
    header.insert(header.end(), {"industry", "worldchange", "shindex", "size", "leverage", "inverse_pe", "turnover",
                                 "ar_lag1", "ar_lag2"});
    write_csv_row(out, header);
    auto num = [](double v) { return is_missing(v) ? std::string() : format_double(v); };
    for (const auto& r : panel.rows) {
        const auto f = static_cast<std::size_t>(r.firm);
        std::vector<std::string> row{panel.tickers[f], panel.dates[static_cast<std::size_t>(r.day - 1)].iso(),
                                     std::to_string(r.day), num(r.ar), num(r.protests), num(r.stdprotests)};
        for (auto name : kFlagNames) row.push_back(std::to_string(panel.flags[f].flag(name)));
        row.insert(row.end(), {panel.industry[f], num(r.worldchange), num(r.shindex), num(r.size), num(r.leverage),
                               num(r.inverse_pe), num(r.turnover), num(r.ar_lag1), num(r.ar_lag2)});
        write_csv_row(out, row);
    }
}

void write_sensitivity_csv(std::ostream& out, std::span<const SensitivityBeta> sens) {
    write_csv_row(out, {"ticker", "fitted", "n_obs", "occupybeta", "occupybeta_prime", "occupybeta_e4"});
    for (const auto& s : sens)
        write_csv_row(out, {s.ticker, s.fitted ? "1" : "0", std::to_string(s.n_obs),
                            s.fitted ? format_double(s.occupybeta) : std::string(), format_double(s.occupybeta_prime),
                            format_double(s.occupybeta_prime * 1e4)});
}

}  // namespace polconn::panel
