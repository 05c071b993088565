#include "polconn/event_study.hpp"

#include "polconn/parallel.hpp"

#include <algorithm>
#include <set>

namespace polconn::es {

namespace {

// Last non-missing value at or before each study position, else the next one after.
std::vector<double> carried(const std::vector<double>& full, std::size_t first, std::size_t end) {
    std::vector<double> out(end - first, kMissing);
    double last = kMissing;
    for (std::size_t p = 0; p < end; ++p) {
        if (!is_missing(full[p])) last = full[p];
        if (p >= first) out[p - first] = last;
    }
    double next = kMissing;
    for (std::size_t p = full.size(); p-- > first;) {
        if (!is_missing(full[p])) next = full[p];
        if (p < end && is_missing(out[p - first])) out[p - first] = next;
    }
    return out;
}

}  // namespace

int anchor_event(Date date, const StudyDays& study) {
    try {
        return study.anchor(date);
    } catch (const DataError& e) {
        throw DateAfterWindow(e.what());
    }
}

CrossSection build_cross_section(const Dataset& ds, const StudyDays& study, std::span<const double> worldbeta) {
    const auto& p = ds.panel;
    if (worldbeta.size() != p.tickers.size()) throw std::invalid_argument("one worldbeta per panel stock required");
    CrossSection cs;
    cs.tickers = p.tickers;
    cs.flags = ds.flags;
    cs.worldbeta.assign(worldbeta.begin(), worldbeta.end());
    for (std::size_t f = 0; f < p.tickers.size(); ++f) {
        cs.industry.push_back(ds.industry.at(p.tickers[f]));
        cs.size.push_back(carried(p.controls[f].size, study.first_position(), study.end_position()));
        cs.leverage.push_back(carried(p.controls[f].leverage, study.first_position(), study.end_position()));
    }
    return cs;
}

std::vector<std::vector<std::string>> default_flag_sets() {
    return {{"proestablish", "pandemo"}, {"H", "red"}, {"centralcontrol", "chinaasset"}};
}

EventRegressionResult event_regression(std::span<const mm::CarValue> car, const CrossSection& cs,
                                       std::span<const std::string> flag_set, int control_day,
                                       const EventOptions& options) {
    if (flag_set.empty()) throw EmptySpecification("event regression needs at least one connection flag");
    if (car.size() != cs.tickers.size()) throw std::invalid_argument("one CAR per cross-section firm required");
    for (const auto& f : flag_set)
        if (std::find(std::begin(kFlagNames), std::end(kFlagNames), f) == std::end(kFlagNames))
            throw std::invalid_argument("unknown connection flag '" + f + "'");

    const auto d = static_cast<std::size_t>(std::max(control_day, 1) - 1);
    std::vector<std::size_t> rows;
    EventRegressionResult r;
    for (std::size_t i = 0; i < car.size(); ++i) {
        const bool ok = car[i].days > 0 &&
                        (!options.controls || (!is_missing(cs.worldbeta[i]) && !is_missing(cs.size[i][d]) &&
                                               !is_missing(cs.leverage[i][d])));
        if (ok)
            rows.push_back(i);
        else
            ++r.n_dropped;
    }

    stats::DesignMatrix X;
    X.labels.assign(flag_set.begin(), flag_set.end());
    if (options.controls) X.labels.insert(X.labels.end(), {"worldbeta", "size", "leverage"});
    const auto n = static_cast<Eigen::Index>(rows.size());
    X.values.resize(n, static_cast<Eigen::Index>(X.labels.size()));
    Eigen::VectorXd y(n);
    std::vector<std::string> industry;
    industry.reserve(rows.size());
    for (Eigen::Index k = 0; k < n; ++k) {
        const std::size_t i = rows[static_cast<std::size_t>(k)];
        Eigen::Index c = 0;
        for (const auto& f : flag_set) X.values(k, c++) = cs.flags[i].flag(f);
        if (options.controls) {
            X.values(k, c++) = cs.worldbeta[i];
            X.values(k, c++) = cs.size[i][d];
            X.values(k, c++) = cs.leverage[i][d];
        }
        y(k) = car[i].value;
        industry.push_back(cs.industry[i]);
    }
    // Sorted labels give codes independent of firm order.
    std::set<std::string> labels(industry.begin(), industry.end());
    std::vector<std::string> sorted(labels.begin(), labels.end());
    std::vector<int> groups(industry.size());
    for (std::size_t k = 0; k < industry.size(); ++k)
        groups[k] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), industry[k]) - sorted.begin());
    std::vector<int> clusters(rows.begin(), rows.end());

    stats::OlsOptions o;
    o.se = options.se;
    if (o.se == stats::SeType::cluster) o.clusters = clusters;
    r.fit = stats::ols_fit_absorbed(X, y, groups, o);
    r.flag_set.assign(flag_set.begin(), flag_set.end());
    return r;
}

namespace {

struct Job {
    std::string name;
    Date date;
    int anchor = 0;
    int halfwidth = 0;
    Window window;
    std::size_t flag_set = 0;
    int control_day = 1;
};

EventSuite run_jobs(std::vector<Job> jobs, const mm::AbnormalPanel& ar, const CrossSection& cs,
                    const std::vector<std::vector<std::string>>& flag_sets, const EventOptions& options,
                    unsigned threads) {
    EventSuite suite;
    std::vector<EventRegressionResult> results(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t j) {
        const Job& job = jobs[j];
        std::vector<mm::CarValue> cars(ar.tickers.size());
        for (std::size_t f = 0; f < ar.tickers.size(); ++f) cars[f] = mm::car(ar.ar[f], job.window.a, job.window.b);
        auto r = event_regression(cars, cs, flag_sets[job.flag_set], job.control_day, options);
        r.event = job.name;
        r.date = job.date;
        r.anchor = job.anchor;
        r.halfwidth = job.halfwidth;
        r.window = job.window;
        results[j] = std::move(r);
    });
    suite.results = std::move(results);
    return suite;
}

}  // namespace

EventSuite run_event_suite(std::span<const EventSpec> events, const mm::AbnormalPanel& ar, const CrossSection& cs,
                           const std::vector<std::vector<std::string>>& flag_sets, const StudyDays& study,
                           const EventOptions& options, unsigned threads) {
    if (events.empty()) throw EmptySpecification("event list is empty");
    if (flag_sets.empty()) throw EmptySpecification("no flag sets declared");
    for (const auto& fs : flag_sets)
        if (fs.empty()) throw EmptySpecification("empty flag set");

    std::vector<const EventSpec*> order;
    for (const auto& e : events) order.push_back(&e);
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->date < b->date; });

    std::vector<Job> jobs;
    std::vector<std::string> warnings;
    for (const EventSpec* e : order) {
        int anchor = 0;
        try {
            anchor = anchor_event(e->date, study);
        } catch (const DateAfterWindow& ex) {
            warnings.push_back("skipped event '" + e->name + "': " + ex.what());
            continue;
        }
        std::vector<int> hws = e->halfwidths;
        std::sort(hws.begin(), hws.end());
        hws.erase(std::unique(hws.begin(), hws.end()), hws.end());
        for (int h : hws) {
            const Window w{anchor - h, anchor + h};
            if (w.a < 0 || w.b > ar.days()) {
                warnings.push_back("skipped event '" + e->name + "' " + w.label() + ": window exceeds study days 0.." +
                                   std::to_string(ar.days()));
                continue;
            }
            for (std::size_t s = 0; s < flag_sets.size(); ++s) jobs.push_back({e->name, e->date, anchor, h, w, s, anchor});
        }
    }
    auto suite = run_jobs(std::move(jobs), ar, cs, flag_sets, options, threads);
    suite.warnings = std::move(warnings);
    return suite;
}

EventSuite run_period_suite(const mm::AbnormalPanel& ar, const CrossSection& cs,
                            const std::vector<std::vector<std::string>>& flag_sets, int split_day,
                            const EventOptions& options, unsigned threads) {
    const int n = ar.days();
    if (split_day < 2 || split_day > n) throw std::invalid_argument("split day must lie inside the study window");
    std::vector<Job> jobs;
    const Window windows[] = {{0, n}, {0, split_day - 1}, {split_day, n}};
    const char* names[] = {"full period", "before split", "after split"};
    for (int w = 0; w < 3; ++w)
        for (std::size_t s = 0; s < flag_sets.size(); ++s)
            jobs.push_back({names[w], ar.dates[static_cast<std::size_t>(std::max(windows[w].a, 1) - 1)], 0, 0, windows[w], s,
                            std::max(windows[w].a, 1)});
    return run_jobs(std::move(jobs), ar, cs, flag_sets, options, threads);
}

void write_event_results_csv(std::ostream& out, const EventSuite& suite) {
    write_csv_row(out, {"event", "date", "anchor", "window", "flag_set", "term", "estimate", "se", "t", "p", "n_obs",
                        "r2", "n_groups"});
    for (const auto& r : suite.results) {
        std::string set;
        for (const auto& f : r.flag_set) set += (set.empty() ? "" : "+") + f;
        for (std::size_t j = 0; j < r.fit.labels.size(); ++j)
            write_csv_row(out, {r.event, r.date.iso(), std::to_string(r.anchor), r.window.label(), set, r.fit.labels[j],
                                format_double(r.fit.coefficients[j]), format_double(r.fit.standard_errors[j]),
                                format_double(r.fit.t_stats[j]), format_double(r.fit.p_values[j]),
                                std::to_string(r.fit.n_obs), format_double(r.fit.r_squared),
                                std::to_string(r.fit.n_groups)});
    }
}

}  // namespace polconn::es
