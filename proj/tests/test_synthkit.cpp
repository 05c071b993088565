#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "polconn/event_study.hpp"
#include "polconn/panel.hpp"
#include "polconn/synthkit.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace polconn;
using namespace polconn::synth;
namespace fs = std::filesystem;

namespace {

const std::string kData = POLCONN_DATA_DIR;

TradingCalendar bundled_calendar() { return TradingCalendar::load(kData + "/hk_calendar.csv"); }

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("polconn_synth_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

panel::PanelModelSpec all_flags() {
    panel::PanelModelSpec s;
    s.name = "all";
    for (auto f : kFlagNames) {
        s.flags.emplace_back(f);
        s.interactions.emplace_back(f);
    }
    return s;
}

}  // namespace

TEST_CASE("rng stream is the reference mt19937_64") {
    Rng r(5489);
    CHECK(r.next() == 14514284786278117030ULL);
    Rng a(1), b(1);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    Rng c(2);
    double s = 0, ss = 0, umin = 1, umax = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = c.normal();
        s += z;
        ss += z * z;
        const double u = c.uniform();
        umin = std::min(umin, u);
        umax = std::max(umax, u);
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(ss / n - 1.0) < 0.02);
    CHECK(umin >= 0.0);
    CHECK(umax < 1.0);
    for (int i = 0; i < 1000; ++i) {
        const auto k = c.integer(3, 5);
        CHECK((k >= 3 && k <= 5));
    }
}

TEST_CASE("oracle ols") {
    std::vector<std::vector<double>> X{{1, 0}, {1, 1}, {1, 2}, {1, 3}, {1, 4}};
    std::vector<double> y{1, 3, 5, 7, 9.5};
    const auto f = oracle_ols(X, y);
    // closed form: slope = Sxy/Sxx = 21/10, intercept = mean(y) - 2.1*2
    CHECK(f.coefficients[1] == doctest::Approx(2.1).epsilon(1e-14));
    CHECK(f.coefficients[0] == doctest::Approx(5.1 - 4.2).epsilon(1e-14));
    CHECK(f.r_squared > 0.99);
    std::vector<std::vector<double>> S{{1, 2}, {2, 4}, {3, 6}, {4, 8}};
    CHECK_THROWS_AS(oracle_ols(S, {1, 2, 3, 4}), SingularMatrix);
    CHECK_THROWS_AS(oracle_ols({{1, 2}, {2, 4}}, {1, 2}), SingularMatrix);
    CHECK_THROWS_AS(oracle_ols({{1, 2}}, {1}), SingularMatrix);
    // identity design returns y
    const auto id = oracle_ols({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {4, -2, 7});
    CHECK(id.coefficients == std::vector<double>{4, -2, 7});
    // duplicated column
    CHECK_THROWS_AS(oracle_ols({{1, 3, 3}, {1, 1, 1}, {1, 2, 2}, {1, 5, 5}}, {1, 2, 3, 4}), SingularMatrix);
}

TEST_CASE("scenarios and validation") {
    CHECK(scenario("fixture").dgp.n_firms == 120);
    CHECK(scenario("paper-shaped").dgp.n_firms == 1961);
    const auto e = scenario("exact");
    CHECK(e.dgp.n_firms == 2000);
    CHECK(e.dgp.noise_sd == 0.0);
    CHECK_THROWS_AS(scenario("nope"), std::invalid_argument);
    PlantedDGP d;
    d.p_H = 1.2;
    CHECK_THROWS_AS(validate(d), std::invalid_argument);
    d = PlantedDGP{};
    d.p_chinaasset = 0.95;
    CHECK_THROWS_AS(validate(d), std::invalid_argument);
}

TEST_CASE("fixture round trip through ingest") {
    const auto dir = scratch("fixture");
    const auto cal = bundled_calendar();
    const auto events = load_events(kData + "/events.csv");
    const auto truth = generate(scenario("fixture"), 11, dir, cal, events);
    const auto ds = load_dataset(dir);
    REQUIRE(ds.panel.tickers.size() == 120);
    CHECK(ds.report.total() == 0);
    CHECK(ds.panel.drops.total() == 0);
    CHECK(ds.events.size() == events.size());
    for (std::size_t f = 0; f < 120; ++f) {
        const auto& t = truth.firms[f];
        CHECK(ds.panel.tickers[f] == t.ticker);
        for (auto n : kFlagNames) CHECK(ds.flags[f].flag(n) == t.flags.flag(n));
        CHECK(ds.industry.at(t.ticker) == t.industry);
    }
    const auto series = protest_series_for_window(ds.protests, ds.calendar, {Date(2019, 6, 6), Date(2020, 1, 17)});
    REQUIRE(series.protests.size() == 155);
    CHECK(series.protests == truth.study_protests);
    for (std::size_t i = 0; i < 155; ++i) CHECK(std::abs(series.stdprotests[i] - truth.study_stdprotests[i]) < 1e-12);

    // same seed, same bytes
    const auto dir2 = scratch("fixture2");
    generate(scenario("fixture"), 11, dir2, cal, events);
    for (const char* f : {"returns.csv", "protests.csv", "officers.csv", "controls.csv", "truth.csv"})
        CHECK(slurp(dir / f) == slurp(dir2 / f));
    const auto dir3 = scratch("fixture3");
    generate(scenario("fixture"), 12, dir3, cal, events);
    CHECK(slurp(dir / "returns.csv") != slurp(dir3 / "returns.csv"));
    fs::remove_all(dir2);
    fs::remove_all(dir3);
    fs::remove_all(dir);
}

TEST_CASE("paper-shaped listing filter drops late listings") {
    auto sc = scenario("paper-shaped");
    sc.dgp.n_firms = 90;  // keep it quick; the late-listing share is what matters
    const auto dir = scratch("paper");
    generate(sc, 3, dir, bundled_calendar());
    const auto ds = load_dataset(dir);
    CHECK(ds.panel.tickers.size() == 90);
    CHECK(ds.panel.drops.count("listing: listed on or after 2018-01-01") == 3);
    fs::remove_all(dir);
}

TEST_CASE("noise-free fixture: pipeline recovers the planted panel coefficients") {
    auto sc = scenario("exact");
    sc.dgp.n_firms = 150;
    sc.dgp.n_industries = 6;
    sc.dgp.psi_occupy = -1000.0;
    const auto dir = scratch("exact");
    const auto truth = generate(sc, 21, dir, bundled_calendar());
    const auto ds = load_dataset(dir);
    const DateRange window{Date(2019, 6, 6), Date(2020, 1, 17)};
    const StudyDays study(ds.calendar, window);
    const auto ar = mm::build_abnormal_panel(ds.panel, study, {Date(2018, 1, 1), Date(2018, 12, 31)}, IndexSeries::MSCI_HK);
    for (std::size_t f = 0; f < truth.firms.size(); ++f) CHECK(std::abs(ar.fits[f].beta - truth.firms[f].beta) < 1e-12);
    const auto ps = protest_series_for_window(ds.protests, ds.calendar, window);
    auto p = panel::build_panel(ar, ps, ds, study);

    // occupy-period sensitivity straight from files
    const StudyDays occ(ds.calendar, {Date(2014, 9, 26), Date(2014, 12, 15)});
    const auto occ_ar = mm::build_abnormal_panel(ds.panel, occ, {Date(2014, 1, 1), Date(2014, 6, 30)}, IndexSeries::MSCI_HK);
    const auto counts = window_counts(ds.protests, ds.calendar, {Date(2014, 9, 26), Date(2014, 12, 15)});
    const auto sens = panel::occupy_sensitivity(occ_ar, counts, 30);
    for (std::size_t f = 0; f < sens.size(); ++f) {
        CHECK(sens[f].fitted == truth.firms[f].occupy_covered);
        if (sens[f].fitted) CHECK(std::abs(sens[f].occupybeta - truth.firms[f].occupy_beta) < 1e-15);
    }
    panel::sensitivity_specs(p, sens, panel::SensitivityVariant::zero_filled, stats::SeType::classical);

    auto spec = all_flags();
    spec.covariate_interactions = {"occupybeta'"};
    const auto r = panel::run_panel_model(p, spec);
    const auto& d = sc.dgp;
    CHECK(std::abs(r.fit.coef("stdprotests") - d.beta_stdprotests) < 1e-10);
    for (auto f : kFlagNames) {
        CHECK(std::abs(r.fit.coef("stdprotests*" + std::string(f)) - d.gamma.at(std::string(f))) < 1e-10);
        CHECK(std::abs(r.fit.coef(std::string(f)) - d.level.at(std::string(f))) < 1e-10);
    }
    CHECK(std::abs(r.fit.coef("stdprotests*occupybeta'") - d.psi_occupy) < 1e-6);
    CHECK(std::abs(r.fit.coef("AR_lag1") - d.rho_lag1) < 1e-10);
    CHECK(std::abs(r.fit.coef("turnover") - d.phi_turnover) < 1e-10);
    CHECK(r.fit.r_squared == doctest::Approx(1.0));
    fs::remove_all(dir);
}

TEST_CASE("straight-line event oracle agrees with the library") {
    Rng rng(8);
    const int n = 60, te = 120, ts = 12;
    TinyDataset t;
    for (int d = 0; d < te; ++d) t.estimation_market.push_back(rng.normal());
    for (int d = 0; d < ts; ++d) t.study_market.push_back(rng.normal());
    es::CrossSection cs;
    mm::AbnormalPanel ap;
    for (int i = 0; i < n; ++i) {
        const double beta = 1 + 0.3 * rng.normal();
        std::vector<double> er, sr;
        for (int d = 0; d < te; ++d) er.push_back(0.01 + beta * t.estimation_market[static_cast<std::size_t>(d)] + rng.normal());
        for (int d = 0; d < ts; ++d) sr.push_back(beta * t.study_market[static_cast<std::size_t>(d)] + rng.normal());
        t.estimation_returns.push_back(er);
        t.study_returns.push_back(sr);
        FirmConnection fc;
        fc.ticker = std::to_string(i);
        fc.H = rng.bernoulli(0.3);
        fc.red = rng.bernoulli(0.3);
        t.flags.push_back({fc.H, fc.red});
        t.worldbeta.push_back(rng.normal());
        t.size.push_back(20 + rng.normal());
        t.leverage.push_back(rng.uniform());
        t.industry.push_back(i % 3 == 0 ? "B" : "A");

        const auto fit = mm::estimate_beta(er, t.estimation_market, 60);
        ap.ar.push_back(mm::abnormal_returns(fit, sr, t.study_market));
        ap.tickers.push_back(fc.ticker);
        cs.tickers.push_back(fc.ticker);
        cs.flags.push_back(fc);
        cs.industry.push_back(t.industry.back());
        cs.worldbeta.push_back(t.worldbeta.back());
        cs.size.emplace_back(ts, t.size.back());
        cs.leverage.emplace_back(ts, t.leverage.back());
    }
    const auto o = oracle_event_pipeline(t, 4, 6);
    std::vector<mm::CarValue> cars;
    for (int i = 0; i < n; ++i) {
        cars.push_back(mm::car(ap.ar[static_cast<std::size_t>(i)], 4, 6));
        CHECK(cars.back().value == doctest::Approx(o.car[static_cast<std::size_t>(i)]).epsilon(1e-10));
    }
    const std::vector<std::string> set{"H", "red"};
    const auto r = es::event_regression(cars, cs, set, 5);
    const char* names[] = {"H", "red", "worldbeta", "size", "leverage"};
    for (std::size_t j = 0; j < 5; ++j) CHECK(r.fit.coef(names[j]) == doctest::Approx(o.coefficients[j]).epsilon(1e-8));
}

TEST_CASE("two-stock hand dataset and permutation") {
    TinyDataset t;
    t.estimation_market = {1, -1, 2, 0};
    t.estimation_returns = {{2, -2, 4, 0}, {1, 0, 1.5, 0.5}};  // beta 2, and beta 0.5 with alpha 0.5
    t.study_market = {1, 2, -1};
    t.study_returns = {{3, 4, -1}, {1, 1, 1}};
    t.flags = {{1}, {0}};
    t.worldbeta = {1, 1};
    t.size = {1, 1};
    t.leverage = {0, 0};
    t.industry = {"A", "A"};
    const auto o = oracle_event_pipeline(t, 0, 3);
    CHECK(o.beta[0] == doctest::Approx(2.0));
    CHECK(o.beta[1] == doctest::Approx(0.5));
    // AR: {1, 0, 1} and {0.5, 0, 1.5}
    CHECK(o.car[0] == doctest::Approx(2.0));
    CHECK(o.car[1] == doctest::Approx(2.0));
    CHECK(o.coefficients.empty());
    for (std::size_t i = 0; i < 2; ++i) {
        const auto fit = mm::estimate_beta(t.estimation_returns[i], t.estimation_market, 3);
        CHECK(std::abs(fit.beta - o.beta[i]) < 1e-10);
        const auto ar = mm::abnormal_returns(fit, t.study_returns[i], t.study_market);
        CHECK(mm::car(ar, 0, 3).value == doctest::Approx(o.car[i]).epsilon(1e-14));
    }
    TinyDataset s = t;
    std::swap(s.estimation_returns[0], s.estimation_returns[1]);
    std::swap(s.study_returns[0], s.study_returns[1]);
    const auto q = oracle_event_pipeline(s, 0, 3);
    CHECK(q.beta[0] == o.beta[1]);
    CHECK(q.car[1] == o.car[0]);
}

TEST_CASE("flag shares on 1,961 firms") {
    auto sc = scenario("paper-shaped");
    const auto dir = scratch("shares");
    const auto truth = generate(sc, 42, dir, bundled_calendar());
    const double n = static_cast<double>(truth.firms.size());
    REQUIRE(truth.firms.size() == 1961);
    const auto& d = sc.dgp;
    const std::pair<const char*, double> targets[] = {{"proestablish", d.p_proestablish}, {"pandemo", d.p_pandemo},
                                                      {"H", d.p_H}, {"red", d.p_red},
                                                      {"centralcontrol", d.p_centralcontrol}, {"chinaasset", d.p_chinaasset}};
    for (const auto& [name, p] : targets) {
        double k = 0;
        for (const auto& f : truth.firms) k += f.flags.flag(name);
        CHECK_MESSAGE(std::abs(k / n - p) <= 2.0 * std::sqrt(p * (1 - p) / n), name);
    }
    CHECK(truth.truth.size() > 20);
    const auto ds = load_dataset(dir);
    CHECK(ds.panel.tickers.size() == 1961);
    const StudyDays study(ds.calendar, {Date(2019, 6, 6), Date(2020, 1, 17)});
    CHECK(study.size() == 155);
    fs::remove_all(dir);

    PlantedDGP zero;
    zero.n_firms = 300;
    zero.p_pandemo = 0.0;
    zero.p_H = 0.0;
    Rng rng(1);
    const auto p = simulate_panel(zero, 5, rng);
    for (const auto& f : p.flags) {
        CHECK(f.pandemo == 0);
        CHECK(f.H == 0);
    }
}

TEST_CASE("simulated panel") {
    PlantedDGP d;
    d.n_firms = 50;
    Rng rng(4);
    const auto p = simulate_panel(d, 30, rng);
    CHECK(p.tickers.size() == 50);
    CHECK(p.days() == 30);
    CHECK(p.rows.size() > 50 * 28);
    CHECK(p.rows.size() <= 50 * 30);
    CHECK(is_missing(p.rows[0].ar_lag1));
    Rng again(4);
    const auto q = simulate_panel(d, 30, again);
    CHECK(q.rows.size() == p.rows.size());
    CHECK(q.rows.back().ar == p.rows.back().ar);
}
