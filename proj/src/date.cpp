#include "polconn/date.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace polconn {

namespace {

bool parse_digits(std::string_view s, int& out) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace

bool Date::try_parse(std::string_view iso, Date& out) {
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') return false;
    int y = 0, m = 0, d = 0;
    if (!parse_digits(iso.substr(0, 4), y) || !parse_digits(iso.substr(5, 2), m) ||
        !parse_digits(iso.substr(8, 2), d))
        return false;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                    std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return false;
    out = Date{std::chrono::sys_days{ymd}};
    return true;
}

Date Date::parse(std::string_view iso) {
    Date d;
    if (!try_parse(iso, d)) throw std::invalid_argument("not an ISO-8601 date: '" + std::string(iso) + "'");
    return d;
}

std::string Date::iso() const {
    std::chrono::year_month_day ymd{sys()};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

unsigned Date::weekday() const { return std::chrono::weekday{sys()}.c_encoding(); }

}  // namespace polconn
