#include "polconn/synthkit.hpp"

#include "polconn/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

namespace polconn::synth {

namespace fs = std::filesystem;

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
}

long long Rng::integer(long long lo, long long hi) {
    if (hi < lo) throw std::invalid_argument("empty integer range");
    const auto span = static_cast<double>(hi - lo + 1);
    return std::min(hi, lo + static_cast<long long>(std::floor(uniform() * span)));
}

Scenario scenario(const std::string& name) {
    Scenario s;
    s.name = name;
    if (name == "fixture") return s;
    if (name == "paper-shaped") {
        s.dgp.n_firms = 1961;
        s.dgp.n_industries = 20;
        s.dgp.noise_sd = 3.5;
        return s;
    }
    if (name == "exact") {
        s.dgp.n_firms = 2000;
        s.dgp.n_industries = 20;
        s.dgp.noise_sd = 0.0;
        s.dgp.estimation_noise_sd = 0.0;
        s.dgp.occupy_noise_sd = 0.0;
        return s;
    }
    throw std::invalid_argument("unknown scenario '" + name + "' (fixture, paper-shaped, exact)");
}

void validate(const PlantedDGP& d) {
    for (double p : {d.p_proestablish, d.p_pandemo, d.p_H, d.p_red, d.p_centralcontrol, d.p_chinaasset,
                     d.missing_return_rate, d.protest_day_rate, d.protest_spike_rate, d.occupy_coverage})
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("DGP probabilities must lie in [0, 1]");
    if (d.p_chinaasset > 1.0 - d.p_H) throw std::invalid_argument("chinaasset share cannot exceed the non-H share");
    for (double s : {d.industry_sd, d.noise_sd, d.beta_sd, d.alpha_sd, d.estimation_noise_sd, d.protest_log_sd,
                     d.occupy_beta_sd, d.occupy_noise_sd})
        if (!(s >= 0.0)) throw std::invalid_argument("DGP standard deviations must be non-negative");
    if (d.n_firms < 1 || d.n_industries < 1) throw std::invalid_argument("need at least one firm and one industry");
    for (auto f : kFlagNames) {
        if (!d.level.count(std::string(f)) || !d.gamma.count(std::string(f)))
            throw std::invalid_argument("DGP lacks coefficients for flag " + std::string(f));
    }
}

namespace {

const char* const kSurnames[] = {"陈", "李", "张", "黄", "何", "林", "吴", "刘", "郭", "梁",
                                 "杨", "王", "冯", "曾", "罗", "邓", "谢", "蔡", "叶", "周",
                                 "徐", "郑", "朱", "胡", "潘", "麦", "苏", "卢", "余", "马"};
const char* const kGiven[] = {"伟", "国", "明", "华", "志", "文", "家", "嘉", "俊", "子", "永", "建", "美", "丽",
                              "慧", "婷", "敏", "玉", "兰", "芳", "宏", "达", "浩", "健", "德", "强", "荣", "光",
                              "瑞", "思", "颖", "咏", "诗", "雅", "凯", "晖", "锦", "振", "耀", "立"};

struct NamePool {
    std::set<std::string> used;
    std::string draw(Rng& rng) {
        for (;;) {
            std::string n = kSurnames[rng.integer(0, std::size(kSurnames) - 1)];
            n += kGiven[rng.integer(0, std::size(kGiven) - 1)];
            n += kGiven[rng.integer(0, std::size(kGiven) - 1)];
            if (used.insert(n).second) return n;
        }
    }
};

std::string ticker_of(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d.HK", i);
    return buf;
}

std::string industry_of(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "IND%02d", i + 1);
    return buf;
}

std::string num(double v) { return std::isnan(v) ? std::string() : format_double(v); }

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

struct RawEvent {
    Date date;
    std::string raw;
    std::string police;
    std::string organizer;
    long long count = 0;
};

// Renders one event of (roughly) `target` people in one of the source
// formats and returns the count the record resolves to.
RawEvent render_event(Date d, long long target, Rng& rng) {
    static const std::pair<const char*, long long> phrases[] = {
        {"数以百计", 500}, {"数千", 5000}, {"过百", 100}, {"上千", 1000}};
    RawEvent e;
    e.date = d;
    target = std::max<long long>(target, 1);
    const double u = rng.uniform();
    if (u < 0.40) {
        e.police = std::to_string(target);
        e.count = target;
    } else if (u < 0.65) {
        // police and organizer figures whose mean is the target
        const long long spread = target / 3;
        e.police = std::to_string(target - spread);
        e.organizer = std::to_string(target + spread);
        e.count = target;
    } else if (u < 0.72) {
        e.organizer = std::to_string(target);
        e.count = target;
    } else if (u < 0.82) {
        e.raw = std::to_string(target);
        e.count = target;
    } else if (u < 0.92 && target >= 100) {
        const long long c = (target + 50) / 100 * 100;
        std::string s = std::to_string(c / 10000);
        const long long frac = (c % 10000) / 100;
        if (frac) {
            char buf[8];
            std::snprintf(buf, sizeof buf, ".%02lld", frac);
            s += buf;
            while (s.back() == '0') s.pop_back();
        }
        e.raw = s + "万";
        e.count = c;
    } else {
        const auto& [text, value] = phrases[rng.integer(0, 3)];
        e.raw = text;
        e.count = value;
    }
    return e;
}

long long draw_size(const PlantedDGP& d, Rng& rng) {
    const double lm = rng.bernoulli(d.protest_spike_rate) ? d.protest_spike_log_mean : d.protest_log_mean;
    const double sd = lm == d.protest_spike_log_mean ? 0.3 : d.protest_log_sd;
    return std::max<long long>(1, std::llround(std::exp(lm + sd * rng.normal())));
}

// Totals per trading day: events on non-trading days roll to the next one.
std::vector<long long> aggregate(const std::vector<RawEvent>& events, const std::vector<Date>& days) {
    std::vector<long long> out(days.size(), 0);
    for (const auto& e : events) {
        const auto it = std::lower_bound(days.begin(), days.end(), e.date);
        if (it == days.end()) throw std::logic_error("synthetic event after the window");
        out[static_cast<std::size_t>(it - days.begin())] += e.count;
    }
    return out;
}

std::vector<double> zscores(const std::vector<long long>& x) {
    long double s = 0;
    for (long long v : x) s += static_cast<long double>(v);
    const long double m = s / static_cast<long double>(x.size());
    long double ss = 0;
    for (long long v : x) ss += (static_cast<long double>(v) - m) * (static_cast<long double>(v) - m);
    const long double sd = std::sqrt(ss / static_cast<long double>(x.size()));
    if (sd == 0) throw std::logic_error("synthetic protest series is constant");
    std::vector<double> z;
    for (long long v : x) z.push_back(static_cast<double>((static_cast<long double>(v) - m) / sd));
    return z;
}

std::vector<Date> days_in(const TradingCalendar& cal, DateRange r) { return cal.slice(r).dates(); }

FirmConnection draw_flags(const PlantedDGP& d, Rng& rng, const std::string& ticker) {
    FirmConnection f;
    f.ticker = ticker;
    f.proestablish = rng.bernoulli(d.p_proestablish);
    f.pandemo = rng.bernoulli(d.p_pandemo);
    f.H = rng.bernoulli(d.p_H);
    f.red = rng.bernoulli(d.p_red);
    f.centralcontrol = rng.bernoulli(d.p_centralcontrol);
    const double p_ca = d.p_H < 1.0 ? d.p_chinaasset / (1.0 - d.p_H) : 0.0;
    f.chinaasset = f.H ? 0 : rng.bernoulli(p_ca);
    return f;
}

struct FirmDay {
    double size, leverage, inverse_pe, turnover;
};

FirmDay draw_controls(double size0, double leverage, Rng& rng) {
    return {size0 + 0.01 * rng.normal(), leverage, 0.05 + 0.1 * rng.normal(), 0.3 * rng.uniform()};
}

double systematic(const PlantedDGP& d, const FirmConnection& f, double industry_effect, double z, double world,
                  double sh, const FirmDay& c, double lag1, double lag2, double occupy_prime) {
    double v = d.constant + industry_effect + d.beta_stdprotests * z;
    for (auto name : kFlagNames) {
        const auto key = std::string(name);
        const int x = f.flag(name);
        v += d.level.at(key) * x + d.gamma.at(key) * z * x;
    }
    v += d.phi_worldchange * world + d.phi_shindex * sh;
    v += d.phi_size * c.size + d.phi_leverage * c.leverage + d.phi_inverse_pe * c.inverse_pe + d.phi_turnover * c.turnover;
    v += d.rho_lag1 * lag1 + d.rho_lag2 * lag2;
    v += d.psi_occupy * z * occupy_prime;
    return v;
}

}  // namespace

SyntheticData generate(const Scenario& sc, std::uint64_t seed, const fs::path& dir, const TradingCalendar& calendar,
                       const std::vector<EventSpec>& events, const Windows& w) {
    const PlantedDGP& d = sc.dgp;
    validate(d);
    Rng rng(seed);
    fs::create_directories(dir);

    SyntheticData out;
    out.seed = seed;
    out.scenario = sc;

    const auto study = days_in(calendar, w.study);
    const auto est = days_in(calendar, w.estimation);
    const auto occ_est = days_in(calendar, w.occupy_estimation);
    const auto occ = days_in(calendar, w.occupy);
    if (study.empty() || est.empty() || occ_est.empty() || occ.empty())
        throw std::invalid_argument("the calendar does not cover every synthetic window");

    // Index returns on every calendar day.
    const auto T = calendar.size();
    std::vector<double> hk(T), world(T), sh(T);
    for (std::size_t t = 0; t < T; ++t) {
        hk[t] = 0.03 + 1.16 * rng.normal();
        world[t] = 0.09 + 0.59 * rng.normal();
        sh[t] = 0.03 + 0.8 * rng.normal();
    }
    auto pos = [&](Date day) { return *calendar.position(day); };

    // Protests: study window and occupy window.
    std::vector<RawEvent> protests;
    for (Date day = w.study.first; !(w.study.last < day); day = day + 1) {
        if (!rng.bernoulli(d.protest_day_rate)) continue;
        const int n = rng.bernoulli(0.1) ? 2 : 1;
        for (int i = 0; i < n; ++i) protests.push_back(render_event(day, draw_size(d, rng), rng));
    }
    const auto n_study_events = protests.size();
    for (Date day = w.occupy.first; !(w.occupy.last < day); day = day + 1)
        if (rng.bernoulli(0.9)) protests.push_back(render_event(day, std::llround(std::exp(9.5 + rng.normal())), rng));
    out.study_protests = aggregate({protests.begin(), protests.begin() + static_cast<std::ptrdiff_t>(n_study_events)}, study);
    out.study_stdprotests = zscores(out.study_protests);
    const auto occ_protests =
        aggregate({protests.begin() + static_cast<std::ptrdiff_t>(n_study_events), protests.end()}, occ);

    // Firms.
    std::vector<double> ind_effect(static_cast<std::size_t>(d.n_industries));
    for (auto& e : ind_effect) e = d.industry_sd * rng.normal();
    for (int i = 0; i < d.n_firms; ++i) {
        FirmTruth f;
        f.ticker = ticker_of(i + 1);
        const auto ind = rng.integer(0, d.n_industries - 1);
        f.industry = industry_of(static_cast<int>(ind));
        f.industry_effect = ind_effect[static_cast<std::size_t>(ind)];
        f.flags = draw_flags(d, rng, f.ticker);
        f.alpha = d.alpha_sd * rng.normal();
        f.beta = d.beta_mean + d.beta_sd * rng.normal();
        f.occupy_covered = rng.bernoulli(d.occupy_coverage);
        f.occupy_beta = f.occupy_covered ? d.occupy_beta_mean + d.occupy_beta_sd * rng.normal() : 0.0;
        out.firms.push_back(f);
    }

    // Rosters and officers: connected firms employ a roster member.
    NamePool names;
    std::vector<std::pair<std::string, Camp>> members;
    const int n_members = std::max(60, d.n_firms * 4 / 5);
    for (int i = 0; i < n_members; ++i) members.emplace_back(names.draw(rng), rng.bernoulli(0.8) ? Camp::establishment : Camp::pandemocrat);
    std::vector<std::size_t> est_members, pan_members;
    for (std::size_t i = 0; i < members.size(); ++i)
        (members[i].second == Camp::establishment ? est_members : pan_members).push_back(i);
    {
        auto o = open_out(dir / "roster.csv");
        write_csv_row(o, {"name", "body", "camp"});
        const char* bodies[] = {"EC2016", "LegCo2016", "DC2019"};
        for (const auto& [n, camp] : members) {
            const auto b = rng.integer(0, 2);
            const char* c = camp == Camp::establishment ? "EST" : "PAN";
            write_csv_row(o, {n, bodies[b], c});
            if (rng.bernoulli(0.1)) write_csv_row(o, {n, bodies[(b + 1) % 3], c});
        }
    }
    {
        auto o = open_out(dir / "officers.csv");
        write_csv_row(o, {"ticker", "officer_name"});
        auto spaced = [&](std::string n) {
            // identical after normalization: inner ASCII or ideographic space
            if (rng.bernoulli(0.15)) n.insert(3, rng.bernoulli(0.5) ? " " : "\xE3\x80\x80");
            return n;
        };
        for (const auto& f : out.firms) {
            const auto k = rng.integer(3, 7);
            std::vector<std::string> off;
            for (long long j = 0; j < k; ++j) off.push_back(names.draw(rng));
            if (f.flags.proestablish) off.push_back(spaced(members[est_members[rng.integer(0, est_members.size() - 1)]].first));
            if (f.flags.pandemo) {
                if (pan_members.empty()) throw std::logic_error("no pan-democrat roster members drawn");
                off.push_back(spaced(members[pan_members[rng.integer(0, pan_members.size() - 1)]].first));
            }
            for (const auto& n : off) write_csv_row(o, {f.ticker, n});
        }
    }

    // Late listings (paper-shaped only) exercise the sampling filter.
    const int n_late = sc.name == "paper-shaped" ? d.n_firms / 30 : 0;
    std::vector<std::string> late;
    for (int i = 0; i < n_late; ++i) late.push_back(ticker_of(d.n_firms + i + 1));

    {
        auto o = open_out(dir / "classes.csv");
        write_csv_row(o, {"ticker", "H", "red", "centralcontrol", "chinaasset"});
        for (const auto& f : out.firms)
            write_csv_row(o, {f.ticker, std::to_string(f.flags.H), std::to_string(f.flags.red),
                              std::to_string(f.flags.centralcontrol), std::to_string(f.flags.chinaasset)});
        for (const auto& t : late) write_csv_row(o, {t, "0", "0", "0", "0"});
    }
    {
        auto o = open_out(dir / "industry.csv");
        write_csv_row(o, {"ticker", "industry"});
        for (const auto& f : out.firms) write_csv_row(o, {f.ticker, f.industry});
        for (const auto& t : late) write_csv_row(o, {t, industry_of(0)});
    }
    {
        auto o = open_out(dir / "listings.csv");
        write_csv_row(o, {"ticker", "listed", "delisted"});
        for (const auto& f : out.firms) write_csv_row(o, {f.ticker, "2005-01-03", ""});
        for (const auto& t : late) write_csv_row(o, {t, "2019-03-01", ""});
    }

    // Returns and controls.
    {
        auto ro = open_out(dir / "returns.csv");
        auto co = open_out(dir / "controls.csv");
        write_csv_row(ro, {"ticker", "date", "return_pct"});
        write_csv_row(co, {"ticker", "date", "size", "leverage", "inverse_pe", "turnover"});
        auto ret = [&](const std::string& t, Date day, double v) { write_csv_row(ro, {t, day.iso(), num(v)}); };
        for (const auto& f : out.firms) {
            if (f.occupy_covered) {
                for (Date day : occ_est)
                    ret(f.ticker, day, f.alpha + f.beta * hk[pos(day)] + d.estimation_noise_sd * rng.normal());
                for (std::size_t i = 0; i < occ.size(); ++i)
                    ret(f.ticker, occ[i],
                        f.beta * hk[pos(occ[i])] + f.occupy_beta * static_cast<double>(occ_protests[i]) +
                            d.occupy_noise_sd * rng.normal());
            }
            for (Date day : est) ret(f.ticker, day, f.alpha + f.beta * hk[pos(day)] + d.estimation_noise_sd * rng.normal());

            const double size0 = 21.9 + 2.36 * rng.normal();
            const double lev = 0.05 + 0.75 * rng.uniform();
            double lag1 = 0.0, lag2 = 0.0;
            for (std::size_t i = 0; i < study.size(); ++i) {
                const std::size_t p = pos(study[i]);
                const FirmDay c = draw_controls(size0, lev, rng);
                const double ar = systematic(d, f.flags, f.industry_effect, out.study_stdprotests[i], world[p], sh[p], c,
                                             lag1, lag2, f.occupy_beta) +
                                  d.noise_sd * rng.normal();
                lag2 = lag1;
                lag1 = ar;
                write_csv_row(co, {f.ticker, study[i].iso(), num(c.size), num(c.leverage), num(c.inverse_pe),
                                   num(c.turnover)});
                if (rng.bernoulli(d.missing_return_rate)) continue;
                ret(f.ticker, study[i], f.beta * hk[p] + ar);
            }
        }
        for (const auto& t : late)
            for (Date day : study) ret(t, day, hk[pos(day)] + rng.normal());
    }

    {
        auto o = open_out(dir / "index.csv");
        write_csv_row(o, {"date", "series", "return_pct"});
        for (std::size_t t = 0; t < T; ++t) {
            write_csv_row(o, {calendar[t].iso(), "MSCI_HK", num(hk[t])});
            write_csv_row(o, {calendar[t].iso(), "MSCI_WORLD", num(world[t])});
            write_csv_row(o, {calendar[t].iso(), "SH_COMP", num(sh[t])});
        }
    }
    {
        auto o = open_out(dir / "calendar.csv");
        write_csv_row(o, {"date"});
        for (const auto& day : calendar.dates()) write_csv_row(o, {day.iso()});
    }
    {
        auto o = open_out(dir / "protests.csv");
        write_csv_row(o, {"date", "raw_count", "police_estimate", "organizer_estimate"});
        auto sorted = protests;
        std::stable_sort(sorted.begin(), sorted.end(), [](const RawEvent& a, const RawEvent& b) { return a.date < b.date; });
        for (const auto& e : sorted) write_csv_row(o, {e.date.iso(), e.raw, e.police, e.organizer});
    }
    if (!events.empty()) {
        auto o = open_out(dir / "events.csv");
        write_csv_row(o, {"name", "date", "halfwidths"});
        for (const auto& e : events) {
            std::string hw;
            for (std::size_t i = 0; i < e.halfwidths.size(); ++i) hw += (i ? ";" : "") + std::to_string(e.halfwidths[i]);
            write_csv_row(o, {e.name, e.date.iso(), hw});
        }
    }

    auto& tr = out.truth;
    tr.emplace_back("scenario", sc.name);
    tr.emplace_back("seed", std::to_string(seed));
    tr.emplace_back("rng", Rng::kAlgorithm);
    tr.emplace_back("n_firms", std::to_string(d.n_firms));
    tr.emplace_back("n_industries", std::to_string(d.n_industries));
    tr.emplace_back("constant", num(d.constant));
    tr.emplace_back("stdprotests", num(d.beta_stdprotests));
    for (auto f : kFlagNames) tr.emplace_back(std::string(f), num(d.level.at(std::string(f))));
    for (auto f : kFlagNames) tr.emplace_back("stdprotests*" + std::string(f), num(d.gamma.at(std::string(f))));
    tr.emplace_back("worldchange", num(d.phi_worldchange));
    tr.emplace_back("shindex", num(d.phi_shindex));
    tr.emplace_back("size", num(d.phi_size));
    tr.emplace_back("leverage", num(d.phi_leverage));
    tr.emplace_back("1/PE", num(d.phi_inverse_pe));
    tr.emplace_back("turnover", num(d.phi_turnover));
    tr.emplace_back("AR_lag1", num(d.rho_lag1));
    tr.emplace_back("AR_lag2", num(d.rho_lag2));
    tr.emplace_back("stdprotests*occupybeta'", num(d.psi_occupy));
    tr.emplace_back("noise_sd", num(d.noise_sd));
    tr.emplace_back("estimation_noise_sd", num(d.estimation_noise_sd));
    tr.emplace_back("occupy_noise_sd", num(d.occupy_noise_sd));
    tr.emplace_back("missing_return_rate", num(d.missing_return_rate));
    {
        auto o = open_out(dir / "truth.csv");
        write_csv_row(o, {"name", "value"});
        for (const auto& [k, v] : tr) write_csv_row(o, {k, v});
    }
    {
        auto o = open_out(dir / "truth_firms.csv");
        std::vector<std::string> h{"ticker", "industry", "industry_effect", "alpha", "beta", "occupy_covered", "occupy_beta"};
        for (auto f : kFlagNames) h.emplace_back(f);
        write_csv_row(o, h);
        for (const auto& f : out.firms) {
            std::vector<std::string> r{f.ticker, f.industry, num(f.industry_effect), num(f.alpha), num(f.beta),
                                       f.occupy_covered ? "1" : "0", num(f.occupy_beta)};
            for (auto n : kFlagNames) r.push_back(std::to_string(f.flags.flag(n)));
            write_csv_row(o, r);
        }
    }
    return out;
}

panel::Panel simulate_panel(const PlantedDGP& d, int n_days, Rng& rng) {
    validate(d);
    if (n_days < 3) throw std::invalid_argument("simulated panel needs at least three days");
    panel::Panel p;
    std::vector<long long> counts(static_cast<std::size_t>(n_days));
    for (auto& c : counts) {
        c = 0;
        // a trading day collects about 1.4 calendar days of events
        for (int k = 0; k < 2; ++k)
            if (rng.bernoulli(k == 0 ? d.protest_day_rate : 0.4 * d.protest_day_rate)) c += draw_size(d, rng);
    }
    if (std::all_of(counts.begin(), counts.end(), [&](long long c) { return c == counts[0]; })) counts[0] += 1;
    const auto z = zscores(counts);
    std::vector<double> world(counts.size()), sh(counts.size());
    for (auto& v : world) v = 0.09 + 0.59 * rng.normal();
    for (auto& v : sh) v = 0.03 + 0.8 * rng.normal();
    for (int t = 0; t < n_days; ++t) p.dates.push_back(Date(2019, 6, 6) + t);

    std::vector<double> ind_effect(static_cast<std::size_t>(d.n_industries));
    for (auto& e : ind_effect) e = d.industry_sd * rng.normal();
    for (int i = 0; i < d.n_firms; ++i) {
        const auto ticker = ticker_of(i + 1);
        const auto ind = static_cast<std::size_t>(rng.integer(0, d.n_industries - 1));
        p.tickers.push_back(ticker);
        p.industry.push_back(industry_of(static_cast<int>(ind)));
        p.flags.push_back(draw_flags(d, rng, ticker));
        const double size0 = 21.9 + 2.36 * rng.normal();
        const double lev = 0.05 + 0.75 * rng.uniform();
        double lag1 = 0.0, lag2 = 0.0;
        bool have1 = false, have2 = false;
        for (int t = 0; t < n_days; ++t) {
            const auto u = static_cast<std::size_t>(t);
            const FirmDay c = draw_controls(size0, lev, rng);
            const double ar = systematic(d, p.flags.back(), ind_effect[ind], z[u], world[u], sh[u], c, lag1, lag2, 0.0) +
                              d.noise_sd * rng.normal();
            const bool observed = !rng.bernoulli(d.missing_return_rate);
            if (observed) {
                panel::PanelRow r;
                r.firm = i;
                r.day = t + 1;
                r.ar = ar;
                r.protests = static_cast<double>(counts[u]);
                r.stdprotests = z[u];
                r.worldchange = world[u];
                r.shindex = sh[u];
                r.size = c.size;
                r.leverage = c.leverage;
                r.inverse_pe = c.inverse_pe;
                r.turnover = c.turnover;
                r.ar_lag1 = have1 ? lag1 : kMissing;
                r.ar_lag2 = have2 ? lag2 : kMissing;
                p.rows.push_back(r);
            }
            lag2 = lag1;
            have2 = have1;
            lag1 = ar;
            have1 = observed;
        }
    }
    return p;
}

OracleFit oracle_ols(const std::vector<std::vector<double>>& X, const std::vector<double>& y, bool centered) {
    const std::size_t n = X.size();
    if (n == 0 || y.size() != n) throw std::invalid_argument("oracle_ols: shape mismatch");
    const std::size_t k = X[0].size();
    if (n < k) throw SingularMatrix("oracle_ols: fewer rows than columns");

    std::vector<std::vector<long double>> a(k, std::vector<long double>(k, 0));
    std::vector<long double> b(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (X[i].size() != k) throw std::invalid_argument("oracle_ols: ragged design");
        for (std::size_t r = 0; r < k; ++r) {
            b[r] += static_cast<long double>(X[i][r]) * y[i];
            for (std::size_t c = 0; c < k; ++c) a[r][c] += static_cast<long double>(X[i][r]) * X[i][c];
        }
    }
    long double scale = 0;
    for (std::size_t r = 0; r < k; ++r) scale = std::max(scale, std::fabs(a[r][r]));

    // Gauss-Jordan with full pivoting: a becomes (X'X)^-1, b the solution.
    std::vector<int> ipiv(k, 0);
    std::vector<std::size_t> indxr(k), indxc(k);
    for (std::size_t i = 0; i < k; ++i) {
        long double big = -1;
        std::size_t irow = 0, icol = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (ipiv[j] == 1) continue;
            for (std::size_t c = 0; c < k; ++c)
                if (ipiv[c] == 0 && std::fabs(a[j][c]) > big) {
                    big = std::fabs(a[j][c]);
                    irow = j;
                    icol = c;
                }
        }
        ++ipiv[icol];
        if (irow != icol) {
            std::swap(a[irow], a[icol]);
            std::swap(b[irow], b[icol]);
        }
        indxr[i] = irow;
        indxc[i] = icol;
        if (std::fabs(a[icol][icol]) <= 1e-13L * scale) throw SingularMatrix("oracle_ols: singular normal equations");
        const long double inv = 1.0L / a[icol][icol];
        a[icol][icol] = 1;
        for (auto& v : a[icol]) v *= inv;
        b[icol] *= inv;
        for (std::size_t r = 0; r < k; ++r) {
            if (r == icol) continue;
            const long double f = a[r][icol];
            a[r][icol] = 0;
            for (std::size_t c = 0; c < k; ++c) a[r][c] -= a[icol][c] * f;
            b[r] -= b[icol] * f;
        }
    }
    for (std::size_t l = k; l-- > 0;)
        if (indxr[l] != indxc[l])
            for (std::size_t r = 0; r < k; ++r) std::swap(a[r][indxr[l]], a[r][indxc[l]]);

    long double ssr = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) sy += y[i];
    const long double ybar = centered ? sy / static_cast<long double>(n) : 0.0L;
    long double sst = 0;
    for (std::size_t i = 0; i < n; ++i) {
        long double fit = 0;
        for (std::size_t c = 0; c < k; ++c) fit += static_cast<long double>(X[i][c]) * b[c];
        ssr += (y[i] - fit) * (y[i] - fit);
        sst += (y[i] - ybar) * (y[i] - ybar);
    }
    // square systems: exact fit, no residual variance
    const long double s2 = n > k ? ssr / static_cast<long double>(n - k) : std::numeric_limits<long double>::quiet_NaN();
    OracleFit out;
    for (std::size_t c = 0; c < k; ++c) {
        out.coefficients.push_back(static_cast<double>(b[c]));
        out.standard_errors.push_back(static_cast<double>(std::sqrt(s2 * a[c][c])));
    }
    out.r_squared = n > k ? static_cast<double>(1.0L - ssr / sst) : 1.0;
    return out;
}

TinyResult oracle_event_pipeline(const TinyDataset& data, int a, int b) {
    const std::size_t n = data.study_returns.size();
    TinyResult out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = data.estimation_returns[i];
        const auto& m = data.estimation_market;
        double mr = 0, mm = 0;
        for (std::size_t t = 0; t < m.size(); ++t) mr += r[t], mm += m[t];
        mr /= static_cast<double>(m.size());
        mm /= static_cast<double>(m.size());
        double sxy = 0, sxx = 0;
        for (std::size_t t = 0; t < m.size(); ++t) {
            sxy += (m[t] - mm) * (r[t] - mr);
            sxx += (m[t] - mm) * (m[t] - mm);
        }
        const double beta = sxy / sxx;
        out.beta.push_back(beta);
        std::vector<double> ar;
        for (std::size_t t = 0; t < data.study_market.size(); ++t)
            ar.push_back(data.study_returns[i][t] - beta * data.study_market[t]);
        double s = 0;
        for (int d = std::max(a, 1); d <= b; ++d) s += ar[static_cast<std::size_t>(d - 1)];
        out.car.push_back(s);
        out.ar.push_back(std::move(ar));
    }

    std::vector<std::string> labels(data.industry.begin(), data.industry.end());
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    std::vector<std::vector<double>> X;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row{1.0};
        for (int f : data.flags[i]) row.push_back(f);
        row.push_back(data.worldbeta[i]);
        row.push_back(data.size[i]);
        row.push_back(data.leverage[i]);
        for (std::size_t g = 1; g < labels.size(); ++g) row.push_back(data.industry[i] == labels[g] ? 1.0 : 0.0);
        X.push_back(std::move(row));
    }
    if (X.size() <= X[0].size()) return out;  // too few stocks for the cross-section
    const auto fit = oracle_ols(X, out.car);
    const std::size_t kf = data.flags.empty() ? 0 : data.flags[0].size();
    out.coefficients.assign(fit.coefficients.begin() + 1, fit.coefficients.begin() + 1 + static_cast<std::ptrdiff_t>(kf + 3));
    return out;
}

}  // namespace polconn::synth
