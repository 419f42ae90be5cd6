#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <string>

#include "stepcast/common.hpp"

namespace stepcast {

/// Calendar date with day-level arithmetic. Weekday convention is
/// 0 = Monday .. 6 = Sunday throughout the library.
class Date {
  public:
    Date() = default;
    Date(int year, unsigned month, unsigned day) {
        using namespace std::chrono;
        year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
        if (!ymd.ok()) throw ParseError("invalid calendar date");
        serial_ = static_cast<int>(sys_days{ymd}.time_since_epoch().count());
    }

    static Date parse(const std::string& iso) {
        // strict YYYY-MM-DD
        if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') throw ParseError("bad date '" + iso + "', want YYYY-MM-DD");
        for (int i : {0, 1, 2, 3, 5, 6, 8, 9})
            if (iso[i] < '0' || iso[i] > '9') throw ParseError("bad date '" + iso + "', want YYYY-MM-DD");
        int y = std::stoi(iso.substr(0, 4));
        unsigned m = static_cast<unsigned>(std::stoi(iso.substr(5, 2)));
        unsigned d = static_cast<unsigned>(std::stoi(iso.substr(8, 2)));
        return Date(y, m, d);
    }

    std::string to_string() const {
        using namespace std::chrono;
        year_month_day ymd{sys_days{days{serial_}}};
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                      static_cast<unsigned>(ymd.day()));
        return buf;
    }

    /// 0 = Monday .. 6 = Sunday.
    int day_of_week() const {
        using namespace std::chrono;
        weekday wd{sys_days{days{serial_}}};
        return static_cast<int>(wd.iso_encoding()) - 1;
    }

    Date plus_days(int n) const {
        Date d;
        d.serial_ = serial_ + n;
        return d;
    }

    /// Days since the unix epoch; useful for gap checks.
    int serial() const { return serial_; }

    friend auto operator<=>(const Date&, const Date&) = default;

  private:
    int serial_ = 0;
};

}  // namespace stepcast
