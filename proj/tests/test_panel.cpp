#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "polconn/panel.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace polconn;
using namespace polconn::panel;

namespace {

struct Planted {
    double beta = -0.035;
    double gamma_pro = 0.02;
    double gamma_pan = 0.1;
    double level_pro = 0.03;
    double level_pan = -0.04;
    double world = -0.15;
    double size = -0.01, lev = -0.05, pe = 0.02, to = 1.3, lag1 = 0.05, lag2 = -0.02;
    double noise = 0.0;
};

// Panel rows generated straight from a linear DGP with industry effects.
Panel planted_panel(int firms, int days, const Planted& p, unsigned seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> nd;
    std::bernoulli_distribution coin(0.25);
    Panel panel;
    std::vector<double> z(static_cast<std::size_t>(days)), world(z.size());
    for (auto& v : z) v = nd(g);
    for (auto& v : world) v = nd(g);
    for (int d = 0; d < days; ++d) panel.dates.push_back(Date(2019, 6, 6) + d);
    const double ind_effect[] = {0.3, -0.2, 0.05, 0.0};
    for (int f = 0; f < firms; ++f) {
        FirmConnection fc;
        fc.ticker = std::to_string(1000 + f) + ".HK";
        fc.proestablish = coin(g);
        fc.pandemo = coin(g);
        fc.H = coin(g);
        panel.tickers.push_back(fc.ticker);
        panel.flags.push_back(fc);
        panel.industry.push_back("I" + std::to_string(f % 4));
        const double sz = 20 + nd(g), lv = 0.5 + 0.1 * nd(g);
        double l1 = kMissing, l2 = kMissing;
        for (int d = 1; d <= days; ++d) {
            PanelRow r;
            r.firm = f;
            r.day = d;
            r.stdprotests = z[static_cast<std::size_t>(d - 1)];
            r.worldchange = world[static_cast<std::size_t>(d - 1)];
            r.shindex = 0.5 * nd(g);
            r.size = sz + 0.01 * nd(g);
            r.leverage = lv;
            r.inverse_pe = 0.05 + 0.1 * nd(g);
            r.turnover = std::abs(0.1 * nd(g));
            r.ar_lag1 = l1;
            r.ar_lag2 = l2;
            const double lag1 = is_missing(l1) ? 0.0 : l1, lag2 = is_missing(l2) ? 0.0 : l2;
            r.ar = ind_effect[f % 4] + p.beta * r.stdprotests + p.level_pro * fc.proestablish + p.level_pan * fc.pandemo +
                   p.gamma_pro * r.stdprotests * fc.proestablish + p.gamma_pan * r.stdprotests * fc.pandemo +
                   p.world * r.worldchange + p.size * r.size + p.lev * r.leverage + p.pe * r.inverse_pe +
                   p.to * r.turnover + p.lag1 * lag1 + p.lag2 * lag2 + p.noise * nd(g);
            l2 = l1;
            l1 = r.ar;
            panel.rows.push_back(r);
        }
    }
    return panel;
}

PanelModelSpec col3() {
    PanelModelSpec s;
    s.name = "(3)";
    s.flags = {"proestablish", "pandemo"};
    s.interactions = {"proestablish", "pandemo"};
    return s;
}

}  // namespace

TEST_CASE("design label order") {
    auto s = col3();
    const std::vector<std::string> want{"stdprotests", "proestablish", "pandemo", "stdprotests*proestablish",
                                        "stdprotests*pandemo", "worldchange", "size", "leverage", "1/PE", "turnover",
                                        "AR_lag1", "AR_lag2"};
    CHECK(design_labels(s) == want);
    s.market = MarketControl::shindex;
    s.controls = false;
    CHECK(design_labels(s) == std::vector<std::string>{"stdprotests", "proestablish", "pandemo",
                                                        "stdprotests*proestablish", "stdprotests*pandemo", "shindex"});
}

TEST_CASE("noise-free panel recovers every planted coefficient") {
    const Planted p;
    const auto panel = planted_panel(150, 40, p, 17);
    const auto r = run_panel_model(panel, col3());
    CHECK(std::abs(r.fit.coef("stdprotests") - p.beta) < 1e-10);
    CHECK(std::abs(r.fit.coef("stdprotests*proestablish") - p.gamma_pro) < 1e-10);
    CHECK(std::abs(r.fit.coef("stdprotests*pandemo") - p.gamma_pan) < 1e-10);
    CHECK(std::abs(r.fit.coef("proestablish") - p.level_pro) < 1e-10);
    CHECK(std::abs(r.fit.coef("AR_lag2") - p.lag2) < 1e-10);
    CHECK(std::abs(r.fit.coef("turnover") - p.to) < 1e-10);
    CHECK(r.n_firms == 150);
    CHECK(r.rows_in_period == 150 * 40);
    CHECK(r.rows_missing == 150 * 2);
    CHECK(r.fit.n_obs == 150 * 38);
    CHECK(r.fit.n_groups == 4);
}

TEST_CASE("fixed-effect variants") {
    const Planted p;
    const auto panel = planted_panel(60, 30, p, 2);
    auto s = col3();
    s.fe = FixedEffects::entity;
    const auto e = run_panel_model(panel, s);
    // firm-constant regressors are spanned by the firm dummies
    CHECK(e.dropped_terms == std::vector<std::string>{"proestablish", "pandemo", "leverage"});
    CHECK(std::abs(e.fit.coef("stdprotests*pandemo") - p.gamma_pan) < 1e-10);
    CHECK(e.fit.n_groups == 60);

    s.fe = FixedEffects::none;
    const auto n = run_panel_model(panel, s);
    CHECK(n.fit.labels.front() == "Constant");
    CHECK(n.fit.n_groups == 0);
}

TEST_CASE("period rows partition the window") {
    const auto panel = planted_panel(20, 155, Planted{}, 3);
    const auto full = period_rows(panel, Period::full, 85);
    const auto pre = period_rows(panel, Period::pre, 85);
    const auto post = period_rows(panel, Period::post, 85);
    CHECK(pre.size() + post.size() == full.size());
    CHECK(pre.size() == 20 * 84);
    for (auto i : post) CHECK(panel.rows[i].day >= 85);
    auto s = col3();
    s.period = Period::post;
    const auto r = run_panel_model(panel, s);
    CHECK(r.rows_in_period == post.size());
}

TEST_CASE("clustered errors use firms") {
    Planted p;
    p.noise = 1.0;
    const auto panel = planted_panel(40, 20, p, 6);
    auto s = col3();
    s.se = stats::SeType::cluster;
    const auto r = run_panel_model(panel, s);
    CHECK(r.fit.n_clusters == 40);
    CHECK(r.fit.df_inference == 39);
}

TEST_CASE("empty period and unknown names") {
    auto panel = planted_panel(5, 10, Planted{}, 1);
    auto s = col3();
    s.period = Period::post;
    s.split_day = 11;
    CHECK_THROWS_AS(run_panel_model(panel, s), EmptyPeriod);
    s = col3();
    s.flags = {"nope"};
    CHECK_THROWS_AS(run_panel_model(panel, s), std::invalid_argument);
    s = col3();
    s.covariates = {"occupybeta'"};
    CHECK_THROWS_AS(run_panel_model(panel, s), std::invalid_argument);
}

TEST_CASE("table presets") {
    const auto t = table_presets(Period::pre, MarketControl::shindex, stats::SeType::robust, 85);
    REQUIRE(t.size() == 7);
    CHECK(t[0].flags.empty());
    CHECK(t[2].name == "(3)");
    CHECK(t[2].interactions == std::vector<std::string>{"proestablish", "pandemo"});
    CHECK(t[3].flags == std::vector<std::string>{"H", "red"});
    CHECK(t[3].interactions.empty());
    CHECK(t[6].interactions == std::vector<std::string>{"centralcontrol", "chinaasset"});
    for (const auto& s : t) {
        CHECK(s.period == Period::pre);
        CHECK(s.market == MarketControl::shindex);
        CHECK(s.se == stats::SeType::robust);
    }
}

TEST_CASE("occupy sensitivity and the zero-filled covariate") {
    Planted p;
    p.noise = 0.5;
    auto panel = planted_panel(30, 25, p, 9);

    mm::AbnormalPanel occ;
    occ.tickers = panel.tickers;
    std::vector<long long> protests(50);
    std::mt19937_64 g(4);
    for (int d = 0; d < 50; ++d) {
        occ.dates.push_back(Date(2014, 9, 26) + d);
        protests[static_cast<std::size_t>(d)] = static_cast<long long>(g() % 50000);
    }
    std::vector<double> planted(30);
    for (std::size_t f = 0; f < 30; ++f) {
        planted[f] = (static_cast<double>(f) - 15.0) * 1e-7;
        std::vector<double> ar(50);
        for (std::size_t d = 0; d < 50; ++d) ar[d] = 0.02 + planted[f] * static_cast<double>(protests[d]);
        if (f % 3 == 0) std::fill(ar.begin() + 10, ar.end(), kMissing);  // 10 days: unfitted
        occ.ar.push_back(ar);
    }
    const auto sens = occupy_sensitivity(occ, protests, 30);
    for (std::size_t f = 0; f < 30; ++f) {
        if (f % 3 == 0) {
            CHECK_FALSE(sens[f].fitted);
            CHECK(sens[f].occupybeta_prime == 0.0);
            CHECK(is_missing(sens[f].occupybeta));
        } else {
            CHECK(sens[f].fitted);
            CHECK(std::abs(sens[f].occupybeta - planted[f]) < 1e-15);
        }
    }

    const auto base = run_panel_model(panel, col3());
    auto fitted_only = sensitivity_specs(panel, sens, SensitivityVariant::fitted_only, stats::SeType::classical);
    REQUIRE(fitted_only.size() == 2);
    const auto r1 = run_panel_model(panel, fitted_only[0]);
    CHECK(r1.n_firms == 20);
    const auto r2 = run_panel_model(panel, fitted_only[1]);
    CHECK(r2.fit.index("stdprotests*occupybeta") > 0);

    auto zero = sensitivity_specs(panel, sens, SensitivityVariant::zero_filled, stats::SeType::classical);
    CHECK(zero[0].name == "(3)");
    CHECK(run_panel_model(panel, zero[1]).n_firms == 30);

    // every firm unfitted: occupybeta' is identically zero and drops out
    std::vector<SensitivityBeta> none(sens.begin(), sens.end());
    for (auto& s : none) s.fitted = false, s.occupybeta = kMissing, s.occupybeta_prime = 0.0;
    auto ctl = sensitivity_specs(panel, none, SensitivityVariant::as_control, stats::SeType::classical);
    REQUIRE(ctl.size() == 7);
    const auto with_zero = run_panel_model(panel, ctl[2]);
    const auto j = with_zero.fit.index("occupybeta'");
    CHECK(with_zero.fit.omitted[j]);
    CHECK(with_zero.fit.coefficients[j] == 0.0);
    for (std::size_t k = 0; k < base.fit.labels.size(); ++k)
        CHECK(std::abs(with_zero.fit.coef(base.fit.labels[k]) - base.fit.coefficients[k]) < 1e-10);

    std::ostringstream out;
    write_sensitivity_csv(out, sens);
    CHECK(out.str().rfind("ticker,fitted,n_obs,occupybeta,occupybeta_prime,occupybeta_e4\n", 0) == 0);
}

TEST_CASE("building the panel from abnormal returns") {
    std::vector<Date> dates;
    for (int i = 0; i < 12; ++i) dates.push_back(Date(2019, 6, 1) + i);
    Dataset ds;
    ds.calendar = TradingCalendar(dates);
    ds.panel.calendar = ds.calendar;
    ds.panel.tickers = {"0001.HK", "0002.HK"};
    ds.panel.returns.assign(2, std::vector<double>(12, 0.0));
    ds.panel.index[IndexSeries::MSCI_WORLD] = std::vector<double>(12, 0.5);
    ds.panel.index[IndexSeries::SH_COMP] = std::vector<double>(12, -0.5);
    ds.panel.controls.resize(2);
    for (auto& c : ds.panel.controls) {
        c.size.assign(12, kMissing);
        c.leverage.assign(12, kMissing);
        c.inverse_pe.assign(12, kMissing);
        c.turnover.assign(12, kMissing);
    }
    ds.panel.controls[0].size[1] = 21.0;  // before the window: carried in
    ds.panel.controls[0].size[6] = 22.0;
    ds.panel.controls[0].leverage[0] = 0.4;
    ds.panel.controls[0].inverse_pe[4] = 0.1;
    ds.panel.controls[0].turnover[4] = 0.2;
    ds.flags = {FirmConnection{"0001.HK", 1, 0, 0, 0, 0, 0}, FirmConnection{"0002.HK", 0, 1, 0, 0, 0, 0}};
    ds.industry = {{"0001.HK", "A"}, {"0002.HK", "B"}};

    const StudyDays study(ds.calendar, {dates[3], dates[11]});
    mm::AbnormalPanel ap;
    ap.tickers = ds.panel.tickers;
    ap.dates = study.dates();
    ap.ar = {{1, 2, 3, 4, 5, 6, 7, 8, 9}, {1, kMissing, 3, 4, 5, 6, 7, 8, 9}};
    ProtestSeries ps;
    ps.dates = ap.dates;
    ps.protests = {0, 10, 0, 0, 5, 0, 0, 0, 100};
    ps.stdprotests = {-1, 0, -1, -1, 0, -1, -1, -1, 3};

    const auto p = build_panel(ap, ps, ds, study);
    CHECK(p.rows.size() == 17);
    const auto& r = p.rows[1];  // firm 0, day 2 (2019-06-05)
    CHECK(r.day == 2);
    CHECK(r.size == 21.0);
    CHECK(r.leverage == 0.4);
    CHECK(r.inverse_pe == 0.1);
    CHECK(r.ar_lag1 == 1.0);
    CHECK(is_missing(r.ar_lag2));
    CHECK(p.rows[4].size == 22.0);
    CHECK(is_missing(p.rows[4].inverse_pe));
    CHECK(p.rows[2].ar_lag2 == 1.0);
    CHECK(p.rows[0].worldchange == 0.5);
    CHECK(p.rows[0].shindex == -0.5);
    // firm 1: day 2 missing, so day 3 has no lag1 and day 4 no lag2
    const auto& f1d3 = p.rows[9 + 1];
    CHECK(f1d3.day == 3);
    CHECK(is_missing(f1d3.ar_lag1));
    CHECK(is_missing(p.rows[9 + 2].ar_lag2));

    ps.dates.pop_back();
    CHECK_THROWS_AS(build_panel(ap, ps, ds, study), CalendarMismatch);
}

TEST_CASE("centering stdprotests leaves the interaction coefficients alone") {
    Planted p;
    p.noise = 1.0;
    auto panel = planted_panel(80, 30, p, 12);
    const auto base = run_panel_model(panel, col3());
    for (auto& r : panel.rows) r.stdprotests -= 0.7;
    const auto shifted = run_panel_model(panel, col3());
    for (const char* t : {"stdprotests*proestablish", "stdprotests*pandemo", "stdprotests"})
        CHECK(std::abs(shifted.fit.coef(t) - base.fit.coef(t)) < 1e-8);
    CHECK(std::abs(shifted.fit.coef("pandemo") - base.fit.coef("pandemo")) > 1e-4);
}

TEST_CASE("scaling AR scales coefficients and errors") {
    Planted p;
    p.noise = 1.0;
    auto panel = planted_panel(50, 20, p, 13);
    auto spec = col3();
    spec.controls = false;  // lags would be scaled too; keep the regressors fixed
    const auto base = run_panel_model(panel, spec);
    for (auto& r : panel.rows) r.ar *= -3.0;
    const auto scaled = run_panel_model(panel, spec);
    for (std::size_t j = 0; j < base.fit.labels.size(); ++j) {
        CHECK(scaled.fit.coefficients[j] == doctest::Approx(-3.0 * base.fit.coefficients[j]).epsilon(1e-10));
        CHECK(scaled.fit.standard_errors[j] == doctest::Approx(3.0 * base.fit.standard_errors[j]).epsilon(1e-10));
        CHECK(std::abs(scaled.fit.p_values[j] - base.fit.p_values[j]) < 1e-10);
    }
}
