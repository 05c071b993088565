#include "polconn/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace polconn {

namespace fs = std::filesystem;

namespace {

Date cell_date(const CsvTable& t, std::size_t row, std::size_t col) {
    Date d;
    if (!Date::try_parse(t.cell(row, col), d))
        t.fail(row, "column '" + t.header()[col] + "': not an ISO-8601 date: '" + t.cell(row, col) + "'");
    return d;
}

std::string trimmed(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return std::string(s);
}

// UTF-8 decode of one code point; malformed bytes pass through as themselves.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) { return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80; };
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    if ((b0 & 0xE0) == 0xC0 && cont(1)) {
        char32_t cp = ((b0 & 0x1Fu) << 6) | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu);
        i += 2;
        return cp;
    }
    if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        char32_t cp = ((b0 & 0x0Fu) << 12) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 6) |
                      (static_cast<unsigned char>(s[i + 2]) & 0x3Fu);
        i += 3;
        return cp;
    }
    if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        char32_t cp = ((b0 & 0x07u) << 18) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 12) |
                      ((static_cast<unsigned char>(s[i + 2]) & 0x3Fu) << 6) | (static_cast<unsigned char>(s[i + 3]) & 0x3Fu);
        i += 4;
        return cp;
    }
    ++i;
    return b0;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_space(char32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' || cp == 0x00A0 ||
           cp == 0x3000 || (cp >= 0x2000 && cp <= 0x200B) || cp == 0xFEFF;
}

std::vector<Date> study_positions_dates(const TradingCalendar& cal, std::size_t b, std::size_t e) {
    return {cal.dates().begin() + static_cast<std::ptrdiff_t>(b), cal.dates().begin() + static_cast<std::ptrdiff_t>(e)};
}

Body parse_body(const CsvTable& t, std::size_t row, std::size_t col) {
    const std::string v = trimmed(t.cell(row, col));
    if (v == "EC2016") return Body::EC2016;
    if (v == "LegCo2016") return Body::LegCo2016;
    if (v == "DC2019") return Body::DC2019;
    t.fail(row, "column 'body': expected EC2016, LegCo2016 or DC2019, found '" + v + "'");
}

Camp parse_camp(const CsvTable& t, std::size_t row, std::size_t col) {
    const std::string v = trimmed(t.cell(row, col));
    if (v == "EST") return Camp::establishment;
    if (v == "PAN") return Camp::pandemocrat;
    t.fail(row, "column 'camp': expected EST or PAN, found '" + v + "'");
}

IndexSeries parse_series(const CsvTable& t, std::size_t row, std::size_t col) {
    const std::string v = trimmed(t.cell(row, col));
    if (v == "MSCI_HK") return IndexSeries::MSCI_HK;
    if (v == "MSCI_WORLD") return IndexSeries::MSCI_WORLD;
    if (v == "SH_COMP") return IndexSeries::SH_COMP;
    t.fail(row, "column 'series': expected MSCI_HK, MSCI_WORLD or SH_COMP, found '" + v + "'");
}

std::string fmt_opt(std::optional<long long> v) { return v ? std::to_string(*v) : std::string(); }
std::string fmt_num(double v) { return is_missing(v) ? std::string() : format_double(v); }

void open_out(std::ofstream& out, const fs::path& p) {
    out.open(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
}

}  // namespace

// ---------------------------------------------------------------- calendar

TradingCalendar::TradingCalendar(std::vector<Date> dates) : dates_(std::move(dates)) {
    for (std::size_t i = 1; i < dates_.size(); ++i)
        if (!(dates_[i - 1] < dates_[i]))
            throw std::invalid_argument("trading calendar not strictly increasing at " + dates_[i].iso());
}

TradingCalendar TradingCalendar::load(const fs::path& path) {
    const CsvTable t = CsvTable::read(path);
    const std::size_t c = t.column("date");
    std::vector<Date> dates;
    dates.reserve(t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r) {
        Date d = cell_date(t, r, c);
        if (!dates.empty() && !(dates.back() < d)) t.fail(r, "calendar dates must be strictly increasing");
        dates.push_back(d);
    }
    return TradingCalendar(std::move(dates));
}

std::optional<std::size_t> TradingCalendar::position(Date d) const {
    auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
    if (it == dates_.end() || *it != d) return std::nullopt;
    return static_cast<std::size_t>(it - dates_.begin());
}

std::size_t TradingCalendar::first_on_or_after(Date d) const {
    return static_cast<std::size_t>(std::lower_bound(dates_.begin(), dates_.end(), d) - dates_.begin());
}

std::pair<std::size_t, std::size_t> TradingCalendar::span_of(DateRange r) const {
    const auto b = first_on_or_after(r.first);
    const auto e = static_cast<std::size_t>(std::upper_bound(dates_.begin(), dates_.end(), r.last) - dates_.begin());
    return {b, std::max(b, e)};
}

TradingCalendar TradingCalendar::slice(DateRange r) const {
    auto [b, e] = span_of(r);
    return TradingCalendar(study_positions_dates(*this, b, e));
}

StudyDays::StudyDays(const TradingCalendar& calendar, DateRange window) : calendar_(calendar) {
    std::tie(first_, last_) = calendar_.span_of(window);
    if (first_ == last_) throw DataError("study window " + window.first.iso() + ".." + window.last.iso() +
                                         " contains no trading days");
}

Date StudyDays::date(int day) const {
    if (day < 1 || day > size()) throw std::out_of_range("day " + std::to_string(day) + " outside the study window");
    return calendar_[first_ + static_cast<std::size_t>(day - 1)];
}

std::vector<Date> StudyDays::dates() const { return study_positions_dates(calendar_, first_, last_); }

int StudyDays::anchor(Date d) const {
    const std::size_t pos = calendar_.first_on_or_after(d);
    if (pos >= last_) throw DataError("date " + d.iso() + " falls after the last study trading day " +
                                      calendar_[last_ - 1].iso());
    return static_cast<int>(pos) - static_cast<int>(first_) + 1;
}

// ---------------------------------------------------------------- protests

long long parse_count_phrase(std::string_view raw) {
    const std::string text = normalize_name(raw);
    if (text.empty()) throw UnrecognizedPhrase(std::string(raw));
    static const std::pair<std::string_view, long long> kPhrases[] = {
        {"数以百计", 500}, {"数千", 5000}, {"过百", 100}, {"上千", 1000}};
    for (const auto& [phrase, value] : kPhrases)
        if (text == phrase) return value;

    // Plain numeral, optional thousands separators, optional 万 multiplier.
    std::string_view s = text;
    long long multiplier = 1;
    constexpr std::string_view kWan = "万";
    if (s.size() > kWan.size() && s.substr(s.size() - kWan.size()) == kWan) {
        multiplier = 10000;
        s.remove_suffix(kWan.size());
    }
    long long integer = 0;
    long long frac = 0;
    long long frac_scale = 1;
    bool seen_digit = false, seen_point = false;
    for (char c : s) {
        if (c >= '0' && c <= '9') {
            seen_digit = true;
            if (seen_point) {
                if (frac_scale >= 1'000'000'000LL) throw UnrecognizedPhrase(std::string(raw));
                frac = frac * 10 + (c - '0');
                frac_scale *= 10;
            } else {
                if (integer > 100'000'000'000LL) throw UnrecognizedPhrase(std::string(raw));
                integer = integer * 10 + (c - '0');
            }
        } else if (c == ',' && !seen_point) {
            continue;
        } else if (c == '.' && !seen_point) {
            seen_point = true;
        } else {
            throw UnrecognizedPhrase(std::string(raw));
        }
    }
    if (!seen_digit) throw UnrecognizedPhrase(std::string(raw));
    // Round half up on the fractional people.
    const long long scaled_frac = frac * multiplier;
    return integer * multiplier + (2 * scaled_frac + frac_scale) / (2 * frac_scale);
}

long long resolve_event_count(const ProtestEvent& e) {
    if (e.police_estimate && e.organizer_estimate) return (*e.police_estimate + *e.organizer_estimate + 1) / 2;
    if (e.police_estimate) return *e.police_estimate;
    if (e.organizer_estimate) return *e.organizer_estimate;
    if (e.raw_count) return parse_count_phrase(*e.raw_count);
    throw DataError("protest event on " + e.date.iso() + " carries no count");
}

std::vector<ProtestEvent> load_protests(const fs::path& path) {
    const CsvTable t = CsvTable::read(path);
    const auto cd = t.column("date"), cr = t.column("raw_count"), cp = t.column("police_estimate"),
               co = t.column("organizer_estimate");
    std::vector<ProtestEvent> events;
    events.reserve(t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r) {
        ProtestEvent e;
        e.date = cell_date(t, r, cd);
        if (std::string raw = trimmed(t.cell(r, cr)); !raw.empty()) e.raw_count = raw;
        e.police_estimate = t.optional_integer(r, cp);
        e.organizer_estimate = t.optional_integer(r, co);
        if ((e.police_estimate && *e.police_estimate < 0) || (e.organizer_estimate && *e.organizer_estimate < 0))
            t.fail(r, "estimates must be non-negative");
        if (!e.raw_count && !e.police_estimate && !e.organizer_estimate)
            t.fail(r, "at least one of raw_count, police_estimate, organizer_estimate is required");
        try {
            e.resolved_count = resolve_event_count(e);
        } catch (const UnrecognizedPhrase& ex) {
            t.fail(r, ex.what());
        }
        events.push_back(std::move(e));
    }
    return events;
}

std::vector<long long> align_counts(std::span<const ProtestEvent> events, const TradingCalendar& cal) {
    std::vector<long long> counts(cal.size(), 0);
    for (const auto& e : events) {
        const std::size_t pos = cal.first_on_or_after(e.date);
        if (pos >= cal.size())
            throw EventAfterWindow("protest event on " + e.date.iso() + " is after the last trading day " +
                                   (cal.empty() ? std::string("(empty calendar)") : cal.dates().back().iso()));
        counts[pos] += e.resolved_count;
    }
    return counts;
}

ProtestSeries align_to_trading_days(std::span<const ProtestEvent> events, const TradingCalendar& cal) {
    ProtestSeries s;
    s.dates = cal.dates();
    s.protests = align_counts(events, cal);
    std::vector<double> x(s.protests.begin(), s.protests.end());
    auto z = stats::standardize(x, stats::Divisor::population);
    s.stdprotests = std::move(z.z);
    s.stats = z.stats;
    return s;
}

std::vector<long long> window_counts(std::span<const ProtestEvent> events, const TradingCalendar& full,
                                     DateRange window) {
    auto [b, e] = full.span_of(window);
    if (b == e) throw DataError("window " + window.first.iso() + ".." + window.last.iso() + " has no trading days");
    const TradingCalendar cal(study_positions_dates(full, b, e));
    const Date last = cal.dates().back();
    std::vector<ProtestEvent> selected;
    for (const auto& ev : events) {
        const bool after_prev = b == 0 || full[b - 1] < ev.date;
        if (after_prev && ev.date <= last) selected.push_back(ev);
    }
    return align_counts(selected, cal);
}

ProtestSeries protest_series_for_window(std::span<const ProtestEvent> events, const TradingCalendar& full,
                                        DateRange window) {
    ProtestSeries s;
    s.dates = full.slice(window).dates();
    s.protests = window_counts(events, full, window);
    std::vector<double> x(s.protests.begin(), s.protests.end());
    auto z = stats::standardize(x, stats::Divisor::population);
    s.stdprotests = std::move(z.z);
    s.stats = z.stats;
    return s;
}

// ---------------------------------------------------------------- rosters

std::string_view to_string(Body b) {
    switch (b) {
        case Body::EC2016: return "EC2016";
        case Body::LegCo2016: return "LegCo2016";
        case Body::DC2019: return "DC2019";
    }
    return "EC2016";
}

std::string_view to_string(Camp c) { return c == Camp::establishment ? "EST" : "PAN"; }

std::string normalize_name(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    for (std::size_t i = 0; i < name.size();) {
        char32_t cp = next_code_point(name, i);
        if (is_space(cp)) continue;
        if (cp >= 0xFF01 && cp <= 0xFF5E) cp -= 0xFEE0;
        append_utf8(out, cp);
    }
    return out;
}

std::vector<RosterMember> load_roster(const fs::path& path) {
    const CsvTable t = CsvTable::read(path);
    const auto cn = t.column("name"), cb = t.column("body"), cc = t.column("camp");
    std::vector<RosterMember> roster;
    roster.reserve(t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r) {
        RosterMember m;
        m.name = trimmed(t.cell(r, cn));
        if (normalize_name(m.name).empty()) t.fail(r, "column 'name': empty");
        m.body = parse_body(t, r, cb);
        m.camp = parse_camp(t, r, cc);
        roster.push_back(std::move(m));
    }
    return roster;
}

std::map<std::string, std::vector<std::string>> load_officers(const fs::path& path) {
    const CsvTable t = CsvTable::read(path);
    const auto ct = t.column("ticker"), cn = t.column("officer_name");
    std::map<std::string, std::vector<std::string>> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        std::string ticker = trimmed(t.cell(r, ct));
        if (ticker.empty()) t.fail(r, "column 'ticker': empty");
        out[ticker].push_back(trimmed(t.cell(r, cn)));
    }
    return out;
}

RosterMatch match_rosters(const std::map<std::string, std::vector<std::string>>& officers,
                          std::span<const RosterMember> roster) {
    std::map<std::string, std::vector<const RosterMember*>> by_name;
    for (const auto& m : roster) by_name[normalize_name(m.name)].push_back(&m);

    RosterMatch out;
    out.unique_members = by_name.size();
    for (const auto& [ticker, names] : officers) {
        PartyFlags f;
        for (const auto& officer : names) {
            const std::string key = normalize_name(officer);
            if (key.empty()) continue;
            auto it = by_name.find(key);
            if (it == by_name.end()) continue;
            for (const RosterMember* m : it->second) {
                (m->camp == Camp::establishment ? f.proestablish : f.pandemo) = 1;
                out.matches.push_back({ticker, officer, m->name, m->body, m->camp});
            }
        }
        out.flags[ticker] = f;
    }
    return out;
}

int FirmConnection::flag(std::string_view name) const {
    if (name == "proestablish") return proestablish;
    if (name == "pandemo") return pandemo;
    if (name == "H") return H;
    if (name == "red") return red;
    if (name == "centralcontrol") return centralcontrol;
    if (name == "chinaasset") return chinaasset;
    throw std::out_of_range("unknown connection flag '" + std::string(name) + "'");
}

std::map<std::string, FirmClass> load_classes(const fs::path& path) {
    const CsvTable t = CsvTable::read(path);
    const auto ct = t.column("ticker"), ch = t.column("H"), cr = t.column("red"), cc = t.column("centralcontrol"),
               ca = t.column("chinaasset");
    std::map<std::string, FirmClass> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        FirmClass c{t.flag(r, ch), t.flag(r, cr), t.flag(r, cc), t.flag(r, ca)};
        if (c.H && c.chinaasset) t.fail(r, "H and chinaasset are mutually exclusive");
        std::string ticker = trimmed(t.cell(r, ct));
        if (!out.emplace(ticker, c).second) t.fail(r, "duplicate ticker '" + ticker + "'");
    }
    return out;
}

std::map<std::string, std::string> load_industry(const fs::path& path) {
    const CsvTable t = CsvTable::read(path);
    const auto ct = t.column("ticker"), ci = t.column("industry");
    std::map<std::string, std::string> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        std::string ticker = trimmed(t.cell(r, ct));
        std::string label = trimmed(t.cell(r, ci));
        if (label.empty()) t.fail(r, "column 'industry': empty");
        if (!out.emplace(ticker, label).second) t.fail(r, "duplicate ticker '" + ticker + "'");
    }
    return out;
}

// ---------------------------------------------------------------- return panel

std::string_view to_string(IndexSeries s) {
    switch (s) {
        case IndexSeries::MSCI_HK: return "MSCI_HK";
        case IndexSeries::MSCI_WORLD: return "MSCI_WORLD";
        case IndexSeries::SH_COMP: return "SH_COMP";
    }
    return "MSCI_HK";
}

void DropReport::add(const std::string& reason, std::size_t count) {
    for (auto& [r, c] : entries_)
        if (r == reason) {
            c += count;
            return;
        }
    entries_.emplace_back(reason, count);
}

std::size_t DropReport::count(const std::string& reason) const {
    for (const auto& [r, c] : entries_)
        if (r == reason) return c;
    return 0;
}

std::size_t DropReport::total() const {
    std::size_t t = 0;
    for (const auto& e : entries_) t += e.second;
    return t;
}

std::optional<std::size_t> ReturnPanel::firm(std::string_view ticker) const {
    auto it = std::lower_bound(tickers.begin(), tickers.end(), ticker);
    if (it == tickers.end() || *it != ticker) return std::nullopt;
    return static_cast<std::size_t>(it - tickers.begin());
}

const std::vector<double>& ReturnPanel::index_series(IndexSeries s) const {
    auto it = index.find(s);
    if (it == index.end()) throw DataError("index series " + std::string(to_string(s)) + " not loaded");
    return it->second;
}

ReturnPanel load_return_panel(const ReturnPanelFiles& files, const TradingCalendar& cal, const ListingFilter& filter) {
    ReturnPanel p;
    p.calendar = cal;
    const std::size_t T = cal.size();

    const CsvTable ret = CsvTable::read(files.returns);
    const auto rt = ret.column("ticker"), rd = ret.column("date"), rv = ret.column("return_pct");

    struct Obs {
        std::size_t pos;
        double value;
        std::size_t row;
    };
    std::map<std::string, std::vector<Obs>> by_ticker;
    for (std::size_t r = 0; r < ret.rows(); ++r) {
        const Date d = cell_date(ret, r, rd);
        const auto pos = cal.position(d);
        if (!pos)
            throw CalendarMismatch(ret.source() + ":" + std::to_string(ret.line(r)) + ": return on " + d.iso() +
                                   ", which is not a trading day");
        std::string ticker = trimmed(ret.cell(r, rt));
        if (ticker.empty()) ret.fail(r, "column 'ticker': empty");
        by_ticker[ticker].push_back({*pos, ret.number(r, rv), r});
    }

    std::map<std::string, Listing> listings;
    if (files.listings) {
        const CsvTable lt = CsvTable::read(*files.listings);
        const auto lc = lt.column("ticker"), ll = lt.column("listed"), ld = lt.column("delisted");
        for (std::size_t r = 0; r < lt.rows(); ++r) {
            Listing l;
            l.listed = cell_date(lt, r, ll);
            if (!trimmed(lt.cell(r, ld)).empty()) l.delisted = cell_date(lt, r, ld);
            if (!listings.emplace(trimmed(lt.cell(r, lc)), l).second) lt.fail(r, "duplicate ticker");
        }
    }

    const std::size_t first_listing_pos = cal.first_on_or_after(filter.listed_before);
    for (auto& [ticker, obs] : by_ticker) {
        if (files.listings) {
            auto it = listings.find(ticker);
            if (it == listings.end()) {
                p.drops.add("listing: no listing record");
                continue;
            }
            if (!(it->second.listed < filter.listed_before)) {
                p.drops.add("listing: listed on or after " + filter.listed_before.iso());
                continue;
            }
            if (it->second.delisted && *it->second.delisted < filter.alive_through) {
                p.drops.add("listing: delisted before " + filter.alive_through.iso());
                continue;
            }
        } else {
            std::size_t first = T;
            for (const auto& o : obs) first = std::min(first, o.pos);
            if (first > first_listing_pos) {
                p.drops.add("listing: listed on or after " + filter.listed_before.iso());
                continue;
            }
        }
        p.tickers.push_back(ticker);
    }
    if (files.listings)
        for (const auto& t : p.tickers) p.listings.emplace(t, listings.at(t));

    p.returns.assign(p.tickers.size(), std::vector<double>(T, kMissing));
    for (std::size_t f = 0; f < p.tickers.size(); ++f) {
        for (const auto& o : by_ticker[p.tickers[f]]) {
            if (!is_missing(p.returns[f][o.pos])) ret.fail(o.row, "duplicate return for " + p.tickers[f] + " on " + cal[o.pos].iso());
            p.returns[f][o.pos] = o.value;
        }
    }
    by_ticker.clear();

    const CsvTable idx = CsvTable::read(files.index);
    const auto id = idx.column("date"), is = idx.column("series"), iv = idx.column("return_pct");
    for (auto s : {IndexSeries::MSCI_HK, IndexSeries::MSCI_WORLD, IndexSeries::SH_COMP})
        p.index[s].assign(T, kMissing);
    for (std::size_t r = 0; r < idx.rows(); ++r) {
        const Date d = cell_date(idx, r, id);
        const IndexSeries s = parse_series(idx, r, is);
        const double v = idx.number(r, iv);
        const auto pos = cal.position(d);
        if (!pos) {
            p.drops.add("index: rows on non-trading dates");
            continue;
        }
        double& slot = p.index[s][*pos];
        if (!is_missing(slot)) idx.fail(r, "duplicate index value");
        slot = v;
    }

    const CsvTable ctl = CsvTable::read(files.controls);
    const auto ct = ctl.column("ticker"), cd = ctl.column("date"), cs = ctl.column("size"), cl = ctl.column("leverage"),
               cp = ctl.column("inverse_pe"), cu = ctl.column("turnover");
    p.controls.resize(p.tickers.size());
    for (auto& c : p.controls) {
        c.size.assign(T, kMissing);
        c.leverage.assign(T, kMissing);
        c.inverse_pe.assign(T, kMissing);
        c.turnover.assign(T, kMissing);
    }
    std::vector<std::vector<bool>> seen(p.tickers.size());
    for (std::size_t r = 0; r < ctl.rows(); ++r) {
        const Date d = cell_date(ctl, r, cd);
        const auto pos = cal.position(d);
        if (!pos)
            throw CalendarMismatch(ctl.source() + ":" + std::to_string(ctl.line(r)) + ": controls on " + d.iso() +
                                   ", which is not a trading day");
        const auto f = p.firm(trimmed(ctl.cell(r, ct)));
        const auto size = ctl.optional_number(r, cs), lev = ctl.optional_number(r, cl),
                   ipe = ctl.optional_number(r, cp), turn = ctl.optional_number(r, cu);
        if (!f) {
            p.drops.add("controls: rows for tickers outside the panel");
            continue;
        }
        if (seen[*f].empty()) seen[*f].assign(T, false);
        if (seen[*f][*pos]) ctl.fail(r, "duplicate controls row");
        seen[*f][*pos] = true;
        if (lev && *lev > 1.0) {
            p.drops.add("controls: leverage > 1 rows");
            continue;
        }
        auto& c = p.controls[*f];
        if (size) c.size[*pos] = *size;
        if (lev) c.leverage[*pos] = *lev;
        if (ipe) c.inverse_pe[*pos] = *ipe;
        if (turn) {
            if (*turn > 1.0)
                p.drops.add("controls: turnover > 1 values");
            else
                c.turnover[*pos] = *turn;
        }
    }
    return p;
}

// ---------------------------------------------------------------- events

std::vector<EventSpec> load_events(const fs::path& path) {
    const CsvTable t = CsvTable::read(path);
    const auto cn = t.column("name"), cd = t.column("date");
    const auto ch = t.find_column("halfwidths");
    std::vector<EventSpec> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        EventSpec e;
        e.name = trimmed(t.cell(r, cn));
        e.date = cell_date(t, r, cd);
        if (ch) {
            const std::string hw = trimmed(t.cell(r, *ch));
            if (!hw.empty()) {
                e.halfwidths.clear();
                std::stringstream ss(hw);
                std::string part;
                while (std::getline(ss, part, ';')) {
                    int h = 0;
                    try {
                        std::size_t used = 0;
                        h = std::stoi(part, &used);
                        if (used != part.size()) throw std::invalid_argument(part);
                    } catch (const std::exception&) {
                        t.fail(r, "column 'halfwidths': expected ';'-separated integers, found '" + hw + "'");
                    }
                    if (h < 0) t.fail(r, "column 'halfwidths': negative half-width");
                    e.halfwidths.push_back(h);
                }
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------- dataset

Dataset load_dataset(const fs::path& dir, const DatasetOptions& options) {
    auto require = [&](const char* name) {
        fs::path p = dir / name;
        if (!fs::exists(p)) throw SchemaViolation(p.string(), 0, "required input file is missing");
        return p;
    };
    auto with_default = [&](const char* name, const std::optional<fs::path>& fallback) -> std::optional<fs::path> {
        fs::path p = dir / name;
        if (fs::exists(p)) return p;
        if (fallback && fs::exists(*fallback)) return *fallback;
        return std::nullopt;
    };

    Dataset ds;
    auto cal_path = with_default("calendar.csv", options.default_calendar);
    if (!cal_path) throw SchemaViolation((dir / "calendar.csv").string(), 0, "required input file is missing");
    ds.calendar = TradingCalendar::load(*cal_path);
    ds.protests = load_protests(require("protests.csv"));
    ds.roster = load_roster(require("roster.csv"));
    ds.officers = load_officers(require("officers.csv"));
    ds.classes = load_classes(require("classes.csv"));
    ds.industry = load_industry(require("industry.csv"));
    if (auto ev = with_default("events.csv", options.default_events)) ds.events = load_events(*ev);

    ReturnPanelFiles files{require("returns.csv"), require("index.csv"), require("controls.csv"), std::nullopt};
    if (fs::exists(dir / "listings.csv")) files.listings = dir / "listings.csv";
    ReturnPanel raw = load_return_panel(files, ds.calendar, options.listing);

    // Single universe: returns ∩ classes ∩ industry.
    std::vector<std::size_t> keep;
    for (std::size_t f = 0; f < raw.tickers.size(); ++f) {
        const auto& t = raw.tickers[f];
        if (!ds.classes.count(t)) {
            ds.report.add("universe: no classification row");
            continue;
        }
        if (!ds.industry.count(t)) {
            ds.report.add("universe: no industry label");
            continue;
        }
        keep.push_back(f);
    }
    ds.panel.calendar = raw.calendar;
    ds.panel.index = std::move(raw.index);
    ds.panel.drops = raw.drops;
    for (auto f : keep) {
        ds.panel.tickers.push_back(raw.tickers[f]);
        ds.panel.returns.push_back(std::move(raw.returns[f]));
        ds.panel.controls.push_back(std::move(raw.controls[f]));
        if (auto it = raw.listings.find(raw.tickers[f]); it != raw.listings.end()) ds.panel.listings.insert(*it);
    }
    std::set<std::string> in_panel(ds.panel.tickers.begin(), ds.panel.tickers.end());
    std::size_t extra_classes = 0;
    for (const auto& [t, c] : ds.classes)
        if (!in_panel.count(t)) ++extra_classes;
    if (extra_classes) ds.report.add("classes: tickers outside the return panel", extra_classes);

    ds.connections = match_rosters(ds.officers, ds.roster);
    for (const auto& t : ds.panel.tickers) {
        FirmConnection fc;
        fc.ticker = t;
        if (auto it = ds.connections.flags.find(t); it != ds.connections.flags.end()) {
            fc.proestablish = it->second.proestablish;
            fc.pandemo = it->second.pandemo;
        }
        const FirmClass& c = ds.classes.at(t);
        fc.H = c.H;
        fc.red = c.red;
        fc.centralcontrol = c.centralcontrol;
        fc.chinaasset = c.chinaasset;
        ds.flags.push_back(fc);
    }
    return ds;
}

void write_canonical(const Dataset& ds, const fs::path& dir, DateRange study_window) {
    fs::create_directories(dir);
    std::ofstream out;
    const auto& cal = ds.calendar;

    open_out(out, dir / "calendar.csv");
    write_csv_row(out, {"date"});
    for (const auto& d : cal.dates()) write_csv_row(out, {d.iso()});
    out.close();

    open_out(out, dir / "protests.csv");
    write_csv_row(out, {"date", "raw_count", "police_estimate", "organizer_estimate"});
    for (const auto& e : ds.protests)
        write_csv_row(out, {e.date.iso(), e.raw_count.value_or(""), fmt_opt(e.police_estimate), fmt_opt(e.organizer_estimate)});
    out.close();

    open_out(out, dir / "roster.csv");
    write_csv_row(out, {"name", "body", "camp"});
    for (const auto& m : ds.roster)
        write_csv_row(out, {m.name, std::string(to_string(m.body)), std::string(to_string(m.camp))});
    out.close();

    open_out(out, dir / "officers.csv");
    write_csv_row(out, {"ticker", "officer_name"});
    for (const auto& [t, names] : ds.officers)
        for (const auto& n : names) write_csv_row(out, {t, n});
    out.close();

    open_out(out, dir / "classes.csv");
    write_csv_row(out, {"ticker", "H", "red", "centralcontrol", "chinaasset"});
    for (const auto& [t, c] : ds.classes)
        write_csv_row(out, {t, std::to_string(c.H), std::to_string(c.red), std::to_string(c.centralcontrol),
                            std::to_string(c.chinaasset)});
    out.close();

    open_out(out, dir / "industry.csv");
    write_csv_row(out, {"ticker", "industry"});
    for (const auto& t : ds.panel.tickers) write_csv_row(out, {t, ds.industry.at(t)});
    out.close();

    if (!ds.events.empty()) {
        open_out(out, dir / "events.csv");
        write_csv_row(out, {"name", "date", "halfwidths"});
        for (const auto& e : ds.events) {
            std::string hw;
            for (std::size_t i = 0; i < e.halfwidths.size(); ++i) hw += (i ? ";" : "") + std::to_string(e.halfwidths[i]);
            write_csv_row(out, {e.name, e.date.iso(), hw});
        }
        out.close();
    }

    if (!ds.panel.listings.empty()) {
        open_out(out, dir / "listings.csv");
        write_csv_row(out, {"ticker", "listed", "delisted"});
        for (const auto& [t, l] : ds.panel.listings)
            write_csv_row(out, {t, l.listed.iso(), l.delisted ? l.delisted->iso() : std::string()});
        out.close();
    }

    open_out(out, dir / "returns.csv");
    write_csv_row(out, {"ticker", "date", "return_pct"});
    for (std::size_t f = 0; f < ds.panel.tickers.size(); ++f)
        for (std::size_t t = 0; t < cal.size(); ++t)
            if (!is_missing(ds.panel.returns[f][t]))
                write_csv_row(out, {ds.panel.tickers[f], cal[t].iso(), format_double(ds.panel.returns[f][t])});
    out.close();

    open_out(out, dir / "index.csv");
    write_csv_row(out, {"date", "series", "return_pct"});
    for (std::size_t t = 0; t < cal.size(); ++t)
        for (const auto& [s, v] : ds.panel.index)
            if (!is_missing(v[t])) write_csv_row(out, {cal[t].iso(), std::string(to_string(s)), format_double(v[t])});
    out.close();

    open_out(out, dir / "controls.csv");
    write_csv_row(out, {"ticker", "date", "size", "leverage", "inverse_pe", "turnover"});
    for (std::size_t f = 0; f < ds.panel.tickers.size(); ++f) {
        const auto& c = ds.panel.controls[f];
        for (std::size_t t = 0; t < cal.size(); ++t) {
            if (is_missing(c.size[t]) && is_missing(c.leverage[t]) && is_missing(c.inverse_pe[t]) && is_missing(c.turnover[t]))
                continue;
            write_csv_row(out, {ds.panel.tickers[f], cal[t].iso(), fmt_num(c.size[t]), fmt_num(c.leverage[t]),
                                fmt_num(c.inverse_pe[t]), fmt_num(c.turnover[t])});
        }
    }
    out.close();

    // Derived tables.
    open_out(out, dir / "flags.csv");
    write_csv_row(out, {"ticker", "proestablish", "pandemo", "H", "red", "centralcontrol", "chinaasset"});
    for (const auto& f : ds.flags)
        write_csv_row(out, {f.ticker, std::to_string(f.proestablish), std::to_string(f.pandemo), std::to_string(f.H),
                            std::to_string(f.red), std::to_string(f.centralcontrol), std::to_string(f.chinaasset)});
    out.close();

    open_out(out, dir / "connection_matches.csv");
    write_csv_row(out, {"ticker", "officer_name", "member_name", "body", "camp"});
    for (const auto& m : ds.connections.matches)
        write_csv_row(out, {m.ticker, m.officer_name, m.member_name, std::string(to_string(m.body)), std::string(to_string(m.camp))});
    out.close();

    const ProtestSeries series = protest_series_for_window(ds.protests, cal, study_window);
    open_out(out, dir / "protest_series.csv");
    write_csv_row(out, {"date", "day", "protests", "stdprotests"});
    for (std::size_t i = 0; i < series.dates.size(); ++i)
        write_csv_row(out, {series.dates[i].iso(), std::to_string(i + 1), std::to_string(series.protests[i]),
                            format_double(series.stdprotests[i])});
    out.close();

    open_out(out, dir / "ingest_report.md");
    out << render_ingest_report(ds);
    out.close();
}

std::string render_ingest_report(const Dataset& ds) {
    std::ostringstream o;
    o << "# Ingest report\n\n";
    o << "| item | count |\n|---|---|\n";
    o << "| trading days in calendar | " << ds.calendar.size() << " |\n";
    o << "| protest events | " << ds.protests.size() << " |\n";
    o << "| roster entries | " << ds.roster.size() << " |\n";
    o << "| unique roster members | " << ds.connections.unique_members << " |\n";
    o << "| firms in universe | " << ds.panel.tickers.size() << " |\n";
    std::size_t est = 0, pan = 0;
    for (const auto& f : ds.flags) {
        est += static_cast<std::size_t>(f.proestablish);
        pan += static_cast<std::size_t>(f.pandemo);
    }
    o << "| firms with establishment-camp officers | " << est << " |\n";
    o << "| firms with pan-democrat officers | " << pan << " |\n";
    o << "| officer/member matches | " << ds.connections.matches.size() << " |\n\n";
    o << "## Drops\n\n| reason | count |\n|---|---|\n";
    std::size_t n = 0;
    for (const auto* rep : {&ds.panel.drops, &ds.report})
        for (const auto& [reason, count] : rep->entries()) {
            o << "| " << reason << " | " << count << " |\n";
            n += count;
        }
    if (n == 0) o << "| (none) | 0 |\n";
    o << "\nTotal dropped: " << n << "\n";
    return o.str();
}

}  // namespace polconn
