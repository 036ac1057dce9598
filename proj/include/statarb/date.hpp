#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace statarb {

// Calendar trading day. Thin wrapper over std::chrono::year_month_day with an
// ISO-8601 text form ("2004-03-31").
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::year_month_day ymd) : ymd_(ymd) {}
    constexpr Date(int y, unsigned m, unsigned d)
        : ymd_(std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}) {}

    static std::optional<Date> parse(std::string_view text) {
        if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
        auto digits = [&](std::size_t from, std::size_t n) -> std::optional<int> {
            int v = 0;
            for (std::size_t i = from; i < from + n; ++i) {
                if (text[i] < '0' || text[i] > '9') return std::nullopt;
                v = v * 10 + (text[i] - '0');
            }
            return v;
        };
        auto y = digits(0, 4), m = digits(5, 2), d = digits(8, 2);
        if (!y || !m || !d) return std::nullopt;
        Date out(*y, static_cast<unsigned>(*m), static_cast<unsigned>(*d));
        if (!out.ymd_.ok()) return std::nullopt;
        return out;
    }

    std::string str() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd_.year()),
                      static_cast<unsigned>(ymd_.month()), static_cast<unsigned>(ymd_.day()));
        return buf;
    }

    constexpr int year() const { return static_cast<int>(ymd_.year()); }
    constexpr unsigned month() const { return static_cast<unsigned>(ymd_.month()); }
    constexpr unsigned day() const { return static_cast<unsigned>(ymd_.day()); }

    // Year*12+month, equal for all days of a calendar month.
    constexpr int month_key() const { return year() * 12 + static_cast<int>(month()); }

    constexpr bool is_weekend() const {
        std::chrono::weekday wd{std::chrono::sys_days{ymd_}};
        return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
    }

    constexpr Date next_business_day() const {
        auto d = std::chrono::sys_days{ymd_};
        do {
            d += std::chrono::days{1};
        } while (Date(std::chrono::year_month_day{d}).is_weekend());
        return Date(std::chrono::year_month_day{d});
    }

    friend constexpr auto operator<=>(const Date& a, const Date& b) {
        return std::chrono::sys_days{a.ymd_} <=> std::chrono::sys_days{b.ymd_};
    }
    friend constexpr bool operator==(const Date& a, const Date& b) { return a.ymd_ == b.ymd_; }

private:
    std::chrono::year_month_day ymd_{std::chrono::year{1970}, std::chrono::January, std::chrono::day{1}};
};

} // namespace statarb
