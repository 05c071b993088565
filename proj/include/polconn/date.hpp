#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace polconn {

// Calendar date stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days d) : days_(d.time_since_epoch().count()) {}
    constexpr Date(int y, unsigned m, unsigned d)
        : Date(std::chrono::sys_days{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}}) {}

    // Strict ISO-8601 "YYYY-MM-DD"; throws std::invalid_argument otherwise.
    static Date parse(std::string_view iso);
    static bool try_parse(std::string_view iso, Date& out);

    std::string iso() const;
    constexpr int serial() const { return days_; }
    constexpr std::chrono::sys_days sys() const { return std::chrono::sys_days{std::chrono::days{days_}}; }
    unsigned weekday() const;  // 0 = Sunday

    constexpr Date operator+(int n) const { Date r; r.days_ = days_ + n; return r; }
    constexpr Date operator-(int n) const { Date r; r.days_ = days_ - n; return r; }
    constexpr auto operator<=>(const Date&) const = default;

private:
    int days_ = 0;
};

// Inclusive date range.
struct DateRange {
    Date first;
    Date last;
    constexpr bool contains(Date d) const { return first <= d && d <= last; }
};

}  // namespace polconn
