#pragma once

#include "polconn/date.hpp"
#include "polconn/ingest.hpp"
#include "polconn/panel.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace polconn::synth {

// mt19937_64 with explicit uniform and normal transforms, so streams are
// reproducible across standard libraries.
class Rng {
public:
    static constexpr const char* kAlgorithm = "mt19937_64; u = (x >> 11) * 2^-53; normal = Box-Muller (cos branch, then sin)";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    std::uint64_t next() { return engine_(); }
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double normal();
    bool bernoulli(double p) { return uniform() < p; }
    // Integer in [lo, hi].
    long long integer(long long lo, long long hi);

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

struct PlantedDGP {
    // Flag marginals.
    double p_proestablish = 0.158;
    double p_pandemo = 0.0367;
    double p_H = 0.123;
    double p_red = 0.0806;
    double p_centralcontrol = 0.141;
    double p_chinaasset = 0.275;  // drawn among non-H firms so the marginal holds

    double constant = 0.09;
    double beta_stdprotests = -0.035;
    std::map<std::string, double> level{{"proestablish", 0.021}, {"pandemo", -0.037}, {"H", -0.126},
                                        {"red", 0.045},          {"centralcontrol", -0.029}, {"chinaasset", -0.018}};
    std::map<std::string, double> gamma{{"proestablish", -0.021}, {"pandemo", -0.065}, {"H", 0.003},
                                        {"red", -0.040},          {"centralcontrol", -0.026}, {"chinaasset", -0.044}};
    double phi_worldchange = -0.156;
    double phi_shindex = 0.0;
    double phi_size = -0.012;
    double phi_leverage = -0.045;
    double phi_inverse_pe = 0.022;
    double phi_turnover = 1.308;
    double rho_lag1 = 0.05;
    double rho_lag2 = -0.02;
    // Coefficient on stdprotests x occupybeta' (raw slope units).
    double psi_occupy = 0.0;
    double industry_sd = 0.05;
    double noise_sd = 1.0;

    // Market model.
    double beta_mean = 1.0;
    double beta_sd = 0.3;
    double alpha_sd = 0.02;
    double estimation_noise_sd = 1.5;
    double missing_return_rate = 0.01;

    // Protest generator: per calendar day, an event occurs with this
    // probability; sizes are lognormal, with rare very large marches.
    double protest_day_rate = 0.45;
    double protest_log_mean = 8.5;
    double protest_log_sd = 1.6;
    double protest_spike_rate = 0.03;
    double protest_spike_log_mean = 13.3;

    // Occupy-period sensitivity: share of firms with 2014 data and the
    // distribution of the planted raw slope.
    double occupy_coverage = 0.75;
    double occupy_beta_mean = -5.5e-7;
    double occupy_beta_sd = 1.6e-6;
    double occupy_noise_sd = 1.5;

    int n_firms = 120;
    int n_industries = 8;
};

struct Scenario {
    std::string name;
    PlantedDGP dgp;
};

// fixture (120 firms), paper-shaped (1,961 firms) and exact (2,000 firms,
// every noise term zero). Throws std::invalid_argument for other names.
Scenario scenario(const std::string& name);
void validate(const PlantedDGP& dgp);

struct Windows {
    DateRange study{Date(2019, 6, 6), Date(2020, 1, 17)};
    DateRange estimation{Date(2018, 1, 1), Date(2018, 12, 31)};
    DateRange occupy_estimation{Date(2014, 1, 1), Date(2014, 6, 30)};
    DateRange occupy{Date(2014, 9, 26), Date(2014, 12, 15)};
};

struct FirmTruth {
    std::string ticker;
    std::string industry;
    FirmConnection flags;
    double alpha = 0.0;
    double beta = 0.0;
    double industry_effect = 0.0;
    bool occupy_covered = false;
    double occupy_beta = 0.0;
};

struct SyntheticData {
    std::uint64_t seed = 0;
    Scenario scenario;
    std::vector<FirmTruth> firms;
    std::vector<std::pair<std::string, std::string>> truth;  // name -> value, as written to truth.csv
    std::vector<long long> study_protests;  // per study trading day, after roll-forward
    std::vector<double> study_stdprotests;
};

// Writes calendar, protests, roster, officers, classes, industry, returns,
// index, controls, events plus truth.csv, truth_firms.csv into dir.
SyntheticData generate(const Scenario& scenario, std::uint64_t seed, const std::filesystem::path& dir,
                       const TradingCalendar& calendar, const std::vector<EventSpec>& events = {},
                       const Windows& windows = {});

// In-memory stock-day panel drawn straight from the DGP (no files, no
// market model): for Monte Carlo work. Flags are drawn from the marginals.
panel::Panel simulate_panel(const PlantedDGP& dgp, int n_days, Rng& rng);

class SingularMatrix : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OracleFit {
    std::vector<double> coefficients;
    std::vector<double> standard_errors;
    double r_squared = 0.0;
};

// Normal equations solved by Gauss-Jordan with full pivoting, long double
// accumulation. X is row-major n x k; `centered` selects R^2 against the
// mean of y. Square systems are solved exactly (standard errors NaN).
OracleFit oracle_ols(const std::vector<std::vector<double>>& X, const std::vector<double>& y, bool centered = true);

struct TinyDataset {
    std::vector<std::vector<double>> estimation_returns;  // stock x day
    std::vector<double> estimation_market;
    std::vector<std::vector<double>> study_returns;
    std::vector<double> study_market;
    std::vector<std::vector<int>> flags;  // stock x flag
    std::vector<double> worldbeta, size, leverage;
    std::vector<std::string> industry;
};

struct TinyResult {
    std::vector<double> beta;
    std::vector<std::vector<double>> ar;
    std::vector<double> car;
    std::vector<double> coefficients;  // flags..., worldbeta, size, leverage; empty when too few stocks
};

// Straight-line market model, AR, CAR over days [a, b] (1-based days, 0 as
// origin) and the cross-sectional regression with explicit industry
// dummies. Stocks must be complete (no missing values).
TinyResult oracle_event_pipeline(const TinyDataset& data, int a, int b);

}  // namespace polconn::synth
