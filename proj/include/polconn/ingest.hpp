#pragma once

#include "polconn/core_stats.hpp"
#include "polconn/csv.hpp"
#include "polconn/date.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace polconn {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CalendarMismatch : public DataError {
public:
    using DataError::DataError;
};

class EventAfterWindow : public DataError {
public:
    using DataError::DataError;
};

class UnrecognizedPhrase : public DataError {
public:
    explicit UnrecognizedPhrase(std::string text)
        : DataError("unrecognized protest-count phrase '" + text + "'"), text_(std::move(text)) {}
    const std::string& text() const { return text_; }

private:
    std::string text_;
};

class TradingCalendar {
public:
    TradingCalendar() = default;
    // Throws std::invalid_argument unless strictly increasing.
    explicit TradingCalendar(std::vector<Date> dates);
    static TradingCalendar load(const std::filesystem::path& path);

    const std::vector<Date>& dates() const { return dates_; }
    std::size_t size() const { return dates_.size(); }
    bool empty() const { return dates_.empty(); }
    const Date& operator[](std::size_t i) const { return dates_[i]; }

    std::optional<std::size_t> position(Date d) const;
    // Index of the first trading day >= d; size() when none.
    std::size_t first_on_or_after(Date d) const;
    // Trading days inside the range, as [begin, end) positions.
    std::pair<std::size_t, std::size_t> span_of(DateRange r) const;
    TradingCalendar slice(DateRange r) const;

private:
    std::vector<Date> dates_;
};

// Trading days of the study window, numbered from 1. Day 0 is the window
// origin: it carries no observation, so a window [0, b] covers days 1..b.
class StudyDays {
public:
    StudyDays() = default;
    StudyDays(const TradingCalendar& calendar, DateRange window);

    int size() const { return static_cast<int>(last_ - first_); }
    std::size_t first_position() const { return first_; }  // calendar position of day 1
    std::size_t end_position() const { return last_; }
    Date date(int day) const;                                // 1 <= day <= size()
    std::vector<Date> dates() const;
    // Day number of the first trading day >= d, relative to day 1 (may be
    // <= 0 for dates before the window). Throws DataError past the last day.
    int anchor(Date d) const;
    const TradingCalendar& calendar() const { return calendar_; }

private:
    TradingCalendar calendar_;
    std::size_t first_ = 0;
    std::size_t last_ = 0;
};

struct ProtestEvent {
    Date date;
    std::optional<std::string> raw_count;
    std::optional<long long> police_estimate;
    std::optional<long long> organizer_estimate;
    long long resolved_count = 0;
};

// Phrase table plus plain numerals ("338000", "2万", "3.5万").
long long parse_count_phrase(std::string_view raw);
// Mean of police/organizer estimates (half rounded up), else the single
// estimate, else the parsed phrase.
long long resolve_event_count(const ProtestEvent& e);

std::vector<ProtestEvent> load_protests(const std::filesystem::path& path);

// Each trading day's total plus every event on the non-trading days since
// the previous trading day. Events before the first day roll into it.
// Throws EventAfterWindow for events past the last day.
std::vector<long long> align_counts(std::span<const ProtestEvent> events, const TradingCalendar& cal);

struct ProtestSeries {
    std::vector<Date> dates;
    std::vector<long long> protests;
    std::vector<double> stdprotests;
    stats::StandardizationStats stats;
};

ProtestSeries align_to_trading_days(std::span<const ProtestEvent> events, const TradingCalendar& cal);

// Raw aligned counts for the window's trading days, using the events that
// fall after the last trading day before the window and on or before its end.
std::vector<long long> window_counts(std::span<const ProtestEvent> events, const TradingCalendar& full,
                                     DateRange window);

// Series for the window's trading days, using the events that fall after
// the last trading day before the window and on or before its end.
ProtestSeries protest_series_for_window(std::span<const ProtestEvent> events, const TradingCalendar& full,
                                        DateRange window);

enum class Body { EC2016, LegCo2016, DC2019 };
enum class Camp { establishment, pandemocrat };

std::string_view to_string(Body b);
std::string_view to_string(Camp c);  // EST | PAN

struct RosterMember {
    std::string name;
    Body body = Body::EC2016;
    Camp camp = Camp::establishment;
};

// Strips whitespace (ASCII, NBSP, ideographic space) and maps full-width
// ASCII forms onto their half-width counterparts.
std::string normalize_name(std::string_view name);

std::vector<RosterMember> load_roster(const std::filesystem::path& path);
// ticker -> officer names, tickers sorted.
std::map<std::string, std::vector<std::string>> load_officers(const std::filesystem::path& path);

struct PartyFlags {
    int proestablish = 0;
    int pandemo = 0;
};

struct ConnectionMatch {
    std::string ticker;
    std::string officer_name;
    std::string member_name;
    Body body;
    Camp camp;
};

struct RosterMatch {
    std::map<std::string, PartyFlags> flags;
    std::vector<ConnectionMatch> matches;
    std::size_t unique_members = 0;
};

RosterMatch match_rosters(const std::map<std::string, std::vector<std::string>>& officers,
                          std::span<const RosterMember> roster);

struct FirmConnection {
    std::string ticker;
    int proestablish = 0;
    int pandemo = 0;
    int H = 0;
    int red = 0;
    int centralcontrol = 0;
    int chinaasset = 0;

    // Flag by variable name; throws std::out_of_range for unknown names.
    int flag(std::string_view name) const;
};

inline constexpr std::string_view kFlagNames[] = {"proestablish", "pandemo", "H", "red", "centralcontrol", "chinaasset"};

struct FirmClass {
    int H = 0;
    int red = 0;
    int centralcontrol = 0;
    int chinaasset = 0;
};

// Rejects rows flagged both H and chinaasset.
std::map<std::string, FirmClass> load_classes(const std::filesystem::path& path);
std::map<std::string, std::string> load_industry(const std::filesystem::path& path);

enum class IndexSeries { MSCI_HK, MSCI_WORLD, SH_COMP };
std::string_view to_string(IndexSeries s);

struct Listing {
    Date listed;
    std::optional<Date> delisted;
};

struct ListingFilter {
    Date listed_before{2018, 1, 1};
    Date alive_through{2020, 1, 17};
};

// Ordered (reason, count) drop counters.
class DropReport {
public:
    void add(const std::string& reason, std::size_t count = 1);
    std::size_t count(const std::string& reason) const;
    std::size_t total() const;
    const std::vector<std::pair<std::string, std::size_t>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::size_t>> entries_;
};

struct FirmControlsSeries {
    std::vector<double> size;
    std::vector<double> leverage;
    std::vector<double> inverse_pe;
    std::vector<double> turnover;
};

// Stock x trading-day data on the full calendar; kMissing marks gaps.
struct ReturnPanel {
    TradingCalendar calendar;
    std::vector<std::string> tickers;  // sorted
    std::vector<std::vector<double>> returns;
    std::vector<FirmControlsSeries> controls;
    std::map<IndexSeries, std::vector<double>> index;
    std::map<std::string, Listing> listings;
    DropReport drops;

    std::optional<std::size_t> firm(std::string_view ticker) const;
    const std::vector<double>& index_series(IndexSeries s) const;
};

struct ReturnPanelFiles {
    std::filesystem::path returns;
    std::filesystem::path index;
    std::filesystem::path controls;
    std::optional<std::filesystem::path> listings;
};

ReturnPanel load_return_panel(const ReturnPanelFiles& files, const TradingCalendar& cal,
                              const ListingFilter& filter = {});

struct EventSpec {
    std::string name;
    Date date;
    std::vector<int> halfwidths{1, 2};
};

std::vector<EventSpec> load_events(const std::filesystem::path& path);

// Everything downstream analyses consume, restricted to one universe of
// tickers (present in returns after filtering, classified, and with an
// industry label).
struct Dataset {
    TradingCalendar calendar;
    std::vector<ProtestEvent> protests;
    std::vector<RosterMember> roster;
    std::map<std::string, std::vector<std::string>> officers;
    std::map<std::string, FirmClass> classes;
    std::map<std::string, std::string> industry;
    std::vector<EventSpec> events;
    ReturnPanel panel;
    RosterMatch connections;
    std::vector<FirmConnection> flags;  // aligned with panel.tickers
    DropReport report;
};

struct DatasetOptions {
    ListingFilter listing;
    // Fallbacks when the dataset directory lacks these files.
    std::optional<std::filesystem::path> default_calendar;
    std::optional<std::filesystem::path> default_events;
};

// Reads calendar, protests, roster, officers, classes, returns, index,
// controls, industry (+ optional listings, events) from a directory.
Dataset load_dataset(const std::filesystem::path& dir, const DatasetOptions& options = {});

// Writes the dataset back in the input schemas (filtered, sorted) plus the
// derived flags, matches and drop report. Re-loading the output reproduces
// the same values.
void write_canonical(const Dataset& ds, const std::filesystem::path& dir, DateRange study_window);

std::string render_ingest_report(const Dataset& ds);

}  // namespace polconn
