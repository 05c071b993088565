#include "polconn/core_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

namespace polconn::stats {

namespace {

constexpr double kRankTolerance = 1e-10;

bool full_column_rank(const Eigen::MatrixXd& scaled) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
    qr.setThreshold(kRankTolerance);
    return qr.rank() == scaled.cols();
}

// First column j such that columns [0, j] are linearly dependent.
std::size_t first_dependent_column(const Eigen::MatrixXd& scaled) {
    for (Eigen::Index j = 0; j < scaled.cols(); ++j)
        if (!full_column_rank(scaled.leftCols(j + 1))) return static_cast<std::size_t>(j);
    return static_cast<std::size_t>(scaled.cols() - 1);
}

double continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 100000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    return h;
}

double mean_of(std::span<const double> v) { return stable_sum(v) / static_cast<double>(v.size()); }

}  // namespace

double stable_sum(std::span<const double> v) {
    double sum = 0.0, comp = 0.0;
    for (double x : v) {
        const double t = sum + x;
        if (std::fabs(sum) >= std::fabs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    return sum + comp;
}

SeType parse_se_type(std::string_view name) {
    if (name == "classical") return SeType::classical;
    if (name == "robust") return SeType::robust;
    if (name == "cluster" || name == "cluster_by_stock") return SeType::cluster;
    throw std::invalid_argument("unknown standard-error type '" + std::string(name) + "'");
}

std::string_view to_string(SeType se) {
    switch (se) {
        case SeType::classical: return "classical";
        case SeType::robust: return "robust";
        case SeType::cluster: return "cluster_by_stock";
    }
    return "classical";
}

std::size_t OlsFit::index(std::string_view label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return i;
    throw std::out_of_range("no coefficient named '" + std::string(label) + "'");
}

void validate(const DesignMatrix& X, const Eigen::VectorXd& y) {
    if (X.labels.size() != X.n_regressors())
        throw std::invalid_argument("design has " + std::to_string(X.n_regressors()) + " columns but " +
                                    std::to_string(X.labels.size()) + " labels");
    if (static_cast<std::size_t>(y.size()) != X.n_obs())
        throw std::invalid_argument("response length " + std::to_string(y.size()) + " != design rows " +
                                    std::to_string(X.n_obs()));
    if (!X.values.allFinite()) throw std::invalid_argument("design contains non-finite entries");
    if (!y.allFinite()) throw std::invalid_argument("response contains non-finite entries");
}

OlsFit ols_fit(const DesignMatrix& X, const Eigen::VectorXd& y, const OlsOptions& options) {
    validate(X, y);
    const Eigen::Index n = X.values.rows();
    const Eigen::Index k_all = X.values.cols();

    OlsFit fit;
    fit.labels = X.labels;
    fit.n_obs = static_cast<int>(n);
    fit.se_type = options.se;
    fit.omitted.assign(static_cast<std::size_t>(k_all), false);

    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < k_all; ++j) {
        if (options.omit_zero_columns && X.values.col(j).isZero(0.0))
            fit.omitted[static_cast<std::size_t>(j)] = true;
        else
            kept.push_back(j);
    }
    const auto k = static_cast<Eigen::Index>(kept.size());
    fit.df_resid = static_cast<int>(n - k - options.absorbed_df);
    if (k == 0) throw InsufficientObservations("design has no estimable columns");
    if (fit.df_resid <= 0)
        throw InsufficientObservations("residual degrees of freedom " + std::to_string(fit.df_resid) + " (n=" +
                                       std::to_string(n) + ", k=" + std::to_string(k + options.absorbed_df) + ")");

    Eigen::MatrixXd Xk(n, k);
    Eigen::VectorXd scale(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        Xk.col(j) = X.values.col(kept[static_cast<std::size_t>(j)]);
        const double norm = Xk.col(j).norm();
        if (norm == 0.0) throw RankDeficient(X.labels[static_cast<std::size_t>(kept[static_cast<std::size_t>(j)])]);
        scale(j) = norm;
    }
    const Eigen::MatrixXd scaled = Xk * scale.cwiseInverse().asDiagonal();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
    qr.setThreshold(kRankTolerance);
    if (qr.rank() < k) {
        const std::size_t bad = first_dependent_column(scaled);
        throw RankDeficient(X.labels[static_cast<std::size_t>(kept[bad])]);
    }

    const Eigen::VectorXd beta_scaled = qr.solve(y);
    const Eigen::VectorXd beta = beta_scaled.cwiseQuotient(scale);
    fit.residuals = y - Xk * beta;

    std::vector<double> sq(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) sq[static_cast<std::size_t>(i)] = fit.residuals(i) * fit.residuals(i);
    fit.ssr = stable_sum(sq);

    const bool centered = X.has_intercept || options.absorbed_df > 0;
    const double ybar = centered ? mean_of(std::span<const double>(y.data(), static_cast<std::size_t>(n))) : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) sq[static_cast<std::size_t>(i)] = (y(i) - ybar) * (y(i) - ybar);
    const double tss = stable_sum(sq);
    fit.r_squared = tss > 0.0 ? std::clamp(1.0 - fit.ssr / tss, 0.0, 1.0) : (fit.ssr == 0.0 ? 1.0 : 0.0);
    fit.r_squared_within = fit.r_squared;

    // (X'X)^-1 in scaled coordinates: P R^-1 R^-T P'.
    const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd Rinv =
        R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::MatrixXd perm_rinv = qr.colsPermutation() * Rinv;
    const Eigen::MatrixXd bread = perm_rinv * perm_rinv.transpose();

    Eigen::MatrixXd cov(k, k);
    fit.df_inference = fit.df_resid;
    switch (options.se) {
        case SeType::classical:
            cov = bread * (fit.ssr / fit.df_resid);
            break;
        case SeType::robust: {
            Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
            for (Eigen::Index i = 0; i < n; ++i) {
                const Eigen::VectorXd xi = scaled.row(i).transpose();
                meat.noalias() += (fit.residuals(i) * fit.residuals(i)) * (xi * xi.transpose());
            }
            cov = bread * meat * bread * (static_cast<double>(n) / fit.df_resid);
            break;
        }
        case SeType::cluster: {
            if (options.clusters.size() != static_cast<std::size_t>(n))
                throw std::invalid_argument("cluster ids required for every row");
            std::map<int, std::size_t> slot;
            for (int id : options.clusters) slot.emplace(id, 0);
            std::size_t next = 0;
            for (auto& [id, s] : slot) s = next++;
            Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(slot.size()));
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto g = static_cast<Eigen::Index>(slot[options.clusters[static_cast<std::size_t>(i)]]);
                scores.col(g).noalias() += scaled.row(i).transpose() * fit.residuals(i);
            }
            const auto G = static_cast<double>(slot.size());
            fit.n_clusters = static_cast<int>(slot.size());
            if (fit.n_clusters < 2) throw InsufficientObservations("cluster-robust errors need at least 2 clusters");
            const Eigen::MatrixXd meat = scores * scores.transpose();
            const double correction = (G / (G - 1.0)) * (static_cast<double>(n - 1) / fit.df_resid);
            cov = bread * meat * bread * correction;
            fit.df_inference = fit.n_clusters - 1;
            break;
        }
    }

    const auto total = static_cast<std::size_t>(k_all);
    fit.coefficients.assign(total, 0.0);
    fit.standard_errors.assign(total, std::numeric_limits<double>::quiet_NaN());
    fit.t_stats.assign(total, std::numeric_limits<double>::quiet_NaN());
    fit.p_values.assign(total, std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index j = 0; j < k; ++j) {
        const auto col = static_cast<std::size_t>(kept[static_cast<std::size_t>(j)]);
        const double b = beta(j);
        const double se = std::sqrt(std::max(cov(j, j), 0.0)) / scale(j);
        double t = 0.0;
        if (se > 0.0)
            t = b / se;
        else if (b != 0.0)
            t = std::copysign(std::numeric_limits<double>::infinity(), b);
        fit.coefficients[col] = b;
        fit.standard_errors[col] = se;
        fit.t_stats[col] = t;
        fit.p_values[col] = student_t_p(t, fit.df_inference);
    }
    return fit;
}

double incomplete_beta(double a, double b, double x, double y) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("incomplete_beta: a and b must be positive");
    if (x <= 0.0) return 0.0;
    if (y <= 0.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * continued_fraction(a, b, x) / a;
    return 1.0 - front * continued_fraction(b, a, y) / b;
}

double student_t_p(double t, double df) {
    if (!(df >= 1.0)) throw std::invalid_argument("student_t_p: df must be >= 1");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return 0.0;
    if (t == 0.0) return 1.0;
    const double t2 = t * t;
    // P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
    const double x = df / (df + t2);
    const double y = t2 / (df + t2);
    return std::clamp(incomplete_beta(0.5 * df, 0.5, x, y), 0.0, 1.0);
}

double student_t_cdf(double t, double df) {
    const double tail = 0.5 * student_t_p(t, df);
    return t >= 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile_two_sided(double alpha, double df) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    double lo = 0.0, hi = 1.0;
    while (student_t_p(hi, df) > alpha) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (student_t_p(mid, df) > alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

StandardizationStats StandardizationStats::from_sample_sd(double mean, double sd_sample, std::size_t n) {
    if (n < 2 || !(sd_sample > 0.0)) throw DegenerateSeries("need n >= 2 and a positive sd");
    StandardizationStats s;
    s.mean = mean;
    s.sd_sample = sd_sample;
    s.n = n;
    s.sd_population = sd_sample * std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n));
    return s;
}

double zscore(double x, const StandardizationStats& stats, Divisor divisor) {
    return (x - stats.mean) / stats.sd(divisor);
}

Standardized standardize(std::span<const double> series, Divisor divisor) {
    const std::size_t n = series.size();
    if (n < 2) throw DegenerateSeries("standardize needs at least 2 observations");
    const double mean = mean_of(series);
    std::vector<double> dev2(n);
    for (std::size_t i = 0; i < n; ++i) dev2[i] = (series[i] - mean) * (series[i] - mean);
    const double ss = stable_sum(dev2);
    if (!(ss > 0.0)) throw DegenerateSeries("standardize: series is constant");

    Standardized out;
    out.stats.mean = mean;
    out.stats.n = n;
    out.stats.sd_population = std::sqrt(ss / static_cast<double>(n));
    out.stats.sd_sample = std::sqrt(ss / static_cast<double>(n - 1));
    out.z.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.z[i] = zscore(series[i], out.stats, divisor);
    return out;
}

GroupCodes encode_groups(std::span<const std::string> labels) {
    GroupCodes g;
    std::unordered_map<std::string, int> seen;
    g.codes.reserve(labels.size());
    for (const auto& l : labels) {
        auto [it, inserted] = seen.emplace(l, g.n_groups);
        if (inserted) ++g.n_groups;
        g.codes.push_back(it->second);
    }
    return g;
}

Absorbed absorb_groups(const DesignMatrix& X, const Eigen::VectorXd& y, std::span<const int> groups) {
    validate(X, y);
    if (X.has_intercept) throw std::invalid_argument("absorb_groups: design must not carry an intercept");
    const Eigen::Index n = X.values.rows();
    if (groups.size() != static_cast<std::size_t>(n)) throw std::invalid_argument("one group label per row required");

    int n_groups = 0;
    for (int c : groups) {
        if (c < 0) throw std::invalid_argument("group codes must be non-negative");
        n_groups = std::max(n_groups, c + 1);
    }
    std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(n_groups));
    for (Eigen::Index i = 0; i < n; ++i) members[static_cast<std::size_t>(groups[static_cast<std::size_t>(i)])].push_back(i);

    Absorbed out;
    out.X.labels = X.labels;
    out.X.has_intercept = false;
    out.X.values = X.values;
    out.y = y;

    std::vector<double> buf;
    auto demean = [&](auto&& column) {
        for (const auto& rows : members) {
            if (rows.empty()) continue;
            buf.clear();
            for (auto r : rows) buf.push_back(column(r));
            const double m = mean_of(buf);
            for (auto r : rows) column(r) -= m;
        }
    };
    for (Eigen::Index j = 0; j < out.X.values.cols(); ++j) demean([&](Eigen::Index r) -> double& { return out.X.values(r, j); });
    demean([&](Eigen::Index r) -> double& { return out.y(r); });

    for (const auto& rows : members) {
        if (rows.empty()) continue;
        ++out.n_groups;
        if (rows.size() == 1) ++out.singleton_groups;
    }
    return out;
}

OlsFit ols_fit_absorbed(const DesignMatrix& X, const Eigen::VectorXd& y, std::span<const int> groups,
                        OlsOptions options) {
    Absorbed a = absorb_groups(X, y, groups);
    const Eigen::Index n = X.values.rows();
    const Eigen::Index k = X.values.cols();

    DesignMatrix restored;
    restored.has_intercept = true;
    restored.labels.reserve(static_cast<std::size_t>(k + 1));
    restored.labels.push_back("Constant");
    restored.labels.insert(restored.labels.end(), X.labels.begin(), X.labels.end());
    restored.values.resize(n, k + 1);
    restored.values.col(0).setOnes();
    std::vector<double> col(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < k; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = X.values(i, j);
        const double grand = mean_of(col);
        restored.values.col(j + 1) = a.X.values.col(j).array() + grand;
    }
    for (Eigen::Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = y(i);
    const double ybar = mean_of(col);
    const Eigen::VectorXd y_restored = a.y.array() + ybar;

    options.absorbed_df += a.n_groups - 1;
    OlsFit fit = ols_fit(restored, y_restored, options);
    fit.n_groups = a.n_groups;

    for (Eigen::Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = (y(i) - ybar) * (y(i) - ybar);
    const double tss = stable_sum(col);
    fit.r_squared_within = fit.r_squared;
    fit.r_squared = tss > 0.0 ? std::clamp(1.0 - fit.ssr / tss, 0.0, 1.0) : 1.0;
    return fit;
}

}  // namespace polconn::stats
