#pragma once

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace citerec {

// Calendar date at day granularity. Ordered by days since the epoch.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days days) : days_(days.time_since_epoch().count()) {}
  constexpr Date(int year, unsigned month, unsigned day)
      : Date(std::chrono::sys_days{std::chrono::year{year} / std::chrono::month{month} /
                                   std::chrono::day{day}}) {}

  // Strict "YYYY-MM-DD". Returns nullopt for anything else, including impossible days.
  static std::optional<Date> parse(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    auto field = [&](std::size_t off, std::size_t len, auto& out) {
      for (std::size_t i = off; i < off + len; ++i) {
        if (text[i] < '0' || text[i] > '9') return false;
      }
      auto r = std::from_chars(text.data() + off, text.data() + off + len, out);
      return r.ec == std::errc{};
    };
    if (!field(0, 4, y) || !field(5, 2, m) || !field(8, 2, d)) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                    std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return Date{std::chrono::sys_days{ymd}};
  }

  std::string to_string() const {
    std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days_}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
  }

  constexpr long days_since_epoch() const noexcept { return days_; }
  static constexpr Date from_days(long days) {
    return Date{std::chrono::sys_days{std::chrono::days{days}}};
  }

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

 private:
  long days_ = 0;
};

}  // namespace citerec
