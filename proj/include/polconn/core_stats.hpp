#pragma once

// Least-squares and inference kernel shared by every estimator in the
// pipeline: QR-based OLS with classical/robust/cluster covariance,
// Student-t p-values, z-standardization and within-group demeaning.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace polconn::stats {

class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A design column lies in the span of the others.
class RankDeficient : public EstimationError {
public:
    explicit RankDeficient(std::string label)
        : EstimationError("rank-deficient design: column '" + label + "' is a linear combination of the others"),
          label_(std::move(label)) {}
    const std::string& label() const { return label_; }

private:
    std::string label_;
};

class InsufficientObservations : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class DegenerateSeries : public EstimationError {
public:
    using EstimationError::EstimationError;
};

struct DesignMatrix {
    std::vector<std::string> labels;
    Eigen::MatrixXd values;     // n_obs x n_regressors
    bool has_intercept = false; // column 0 is the constant

    std::size_t n_obs() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t n_regressors() const { return static_cast<std::size_t>(values.cols()); }
};

enum class SeType { classical, robust, cluster };

SeType parse_se_type(std::string_view name);  // classical | robust | cluster_by_stock
std::string_view to_string(SeType se);

struct OlsOptions {
    SeType se = SeType::classical;
    // One id per row; required when se == cluster.
    std::span<const int> clusters{};
    // Parameters estimated outside the design (absorbed fixed effects).
    int absorbed_df = 0;
    // Identically-zero columns are reported as omitted instead of raising
    // RankDeficient. Any other collinearity still raises.
    bool omit_zero_columns = false;
};

struct OlsFit {
    std::vector<std::string> labels;
    std::vector<double> coefficients;
    std::vector<double> standard_errors;
    std::vector<double> t_stats;
    std::vector<double> p_values;
    std::vector<bool> omitted;
    Eigen::VectorXd residuals;
    double r_squared = 0.0;
    double r_squared_within = 0.0;  // equals r_squared unless groups were absorbed
    double ssr = 0.0;
    int df_resid = 0;
    int df_inference = 0;  // df of the t reference (G-1 under clustering)
    int n_obs = 0;
    int n_clusters = 0;
    int n_groups = 0;  // absorbed fixed-effect groups, 0 if none
    SeType se_type = SeType::classical;

    // Throws std::out_of_range for an unknown label.
    std::size_t index(std::string_view label) const;
    double coef(std::string_view label) const { return coefficients[index(label)]; }
    double se(std::string_view label) const { return standard_errors[index(label)]; }
    double p(std::string_view label) const { return p_values[index(label)]; }
};

// Throws std::invalid_argument when the DesignMatrix invariants are broken
// (shape, non-finite entries).
void validate(const DesignMatrix& X, const Eigen::VectorXd& y);

OlsFit ols_fit(const DesignMatrix& X, const Eigen::VectorXd& y, const OlsOptions& options = {});

// Regularized incomplete beta I_x(a, b); y = 1 - x is passed separately for accuracy near 1.
double incomplete_beta(double a, double b, double x, double y);
inline double incomplete_beta(double a, double b, double x) { return incomplete_beta(a, b, x, 1.0 - x); }

double student_t_cdf(double t, double df);
// Two-sided p = 2 (1 - F(|t|; df)).
double student_t_p(double t, double df);
// Two-sided critical value: student_t_p(q, df) == alpha.
double student_t_quantile_two_sided(double alpha, double df);

enum class Divisor { population, sample };

struct StandardizationStats {
    double mean = 0.0;
    double sd_population = 0.0;
    double sd_sample = 0.0;
    std::size_t n = 0;

    double sd(Divisor d) const { return d == Divisor::population ? sd_population : sd_sample; }
    // Reconstructs both variants from a reported sample sd.
    static StandardizationStats from_sample_sd(double mean, double sd_sample, std::size_t n);
};

struct Standardized {
    std::vector<double> z;
    StandardizationStats stats;
};

double zscore(double x, const StandardizationStats& stats, Divisor divisor);
Standardized standardize(std::span<const double> series, Divisor divisor);

// Dense group codes in [0, n_groups) in order of first appearance.
struct GroupCodes {
    std::vector<int> codes;
    int n_groups = 0;
};
GroupCodes encode_groups(std::span<const std::string> labels);

struct Absorbed {
    DesignMatrix X;
    Eigen::VectorXd y;
    int n_groups = 0;
    int singleton_groups = 0;
};

// Within-group demeaning. Every column of X and y ends with zero mean in
// every group. X must not carry an intercept column.
Absorbed absorb_groups(const DesignMatrix& X, const Eigen::VectorXd& y, std::span<const int> groups);

// OLS with group dummies absorbed. Reports a "Constant" first (grand-mean
// intercept, y-bar - x-bar'b) followed by the slopes; df_resid counts the
// absorbed groups. r_squared includes the fixed effects, r_squared_within
// does not.
OlsFit ols_fit_absorbed(const DesignMatrix& X, const Eigen::VectorXd& y, std::span<const int> groups,
                        OlsOptions options = {});

// Neumaier-compensated sum.
double stable_sum(std::span<const double> v);

}  // namespace polconn::stats
