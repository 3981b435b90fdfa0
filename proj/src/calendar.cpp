#include "spotv2/calendar.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

#include "spotv2/error.hpp"

namespace spotv2 {

using namespace std::chrono;

namespace {

int parse_int(std::string_view s) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw Error(ErrorKind::Format, fmt::format("bad integer '{}' in date", s));
    }
    return value;
}

Date easter_sunday(int y) {
    // Anonymous Gregorian algorithm.
    int a = y % 19, b = y / 100, c = y % 100, d = b / 4, e = b % 4;
    int f = (b + 8) / 25, g = (b - f + 1) / 3;
    int h = (19 * a + b - d - g + 15) % 30;
    int i = c / 4, k = c % 4;
    int l = (32 + 2 * e + 2 * i - h - k) % 7;
    int m = (a + 11 * h + 22 * l) / 451;
    int month_num = (h + l - 7 * m + 114) / 31;
    int day_num = ((h + l - 7 * m + 114) % 31) + 1;
    return sys_days{year{y} / month{static_cast<unsigned>(month_num)} /
                    day{static_cast<unsigned>(day_num)}};
}

Date observed(Date d) {
    weekday w{d};
    if (w == Saturday) return d - days{1};
    if (w == Sunday) return d + days{1};
    return d;
}

}  // namespace

Date parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw Error(ErrorKind::Format, fmt::format("expected YYYY-MM-DD, got '{}'", text));
    }
    year_month_day ymd{year{parse_int(text.substr(0, 4))},
                       month{static_cast<unsigned>(parse_int(text.substr(5, 2)))},
                       day{static_cast<unsigned>(parse_int(text.substr(8, 2)))}};
    if (!ymd.ok()) throw Error(ErrorKind::Format, fmt::format("invalid date '{}'", text));
    return sys_days{ymd};
}

std::string format_date(Date d) {
    year_month_day ymd{d};
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

bool is_weekend(Date d) {
    weekday w{d};
    return w == Saturday || w == Sunday;
}

std::vector<Date> nyse_holidays(int y) {
    std::vector<Date> out;
    const year yr{y};

    // New Year's Day: a Saturday holiday is not moved back into the prior year.
    Date ny = sys_days{yr / January / 1};
    if (weekday{ny} == Sunday) out.push_back(ny + days{1});
    else if (weekday{ny} != Saturday) out.push_back(ny);

    out.push_back(sys_days{yr / January / Monday[3]});
    out.push_back(sys_days{yr / February / Monday[3]});
    out.push_back(easter_sunday(y) - days{2});
    out.push_back(sys_days{yr / May / Monday[last]});
    if (y >= 2022) out.push_back(observed(sys_days{yr / June / 19}));
    out.push_back(observed(sys_days{yr / July / 4}));
    out.push_back(sys_days{yr / September / Monday[1]});
    out.push_back(sys_days{yr / November / Thursday[4]});
    out.push_back(observed(sys_days{yr / December / 25}));
    std::sort(out.begin(), out.end());
    return out;
}

bool is_nyse_session(Date d) {
    if (is_weekend(d)) return false;
    const int y = static_cast<int>(year_month_day{d}.year());
    auto hols = nyse_holidays(y);
    return !std::binary_search(hols.begin(), hols.end(), d);
}

std::vector<Date> nyse_sessions(Date first, Date last) {
    std::vector<Date> out;
    for (Date d = first; d <= last; d += days{1}) {
        if (is_nyse_session(d)) out.push_back(d);
    }
    return out;
}

std::vector<Date> next_sessions(Date first, std::size_t n) {
    std::vector<Date> out;
    out.reserve(n);
    for (Date d = first; out.size() < n; d += days{1}) {
        if (is_nyse_session(d)) out.push_back(d);
    }
    return out;
}

SplitBoundaries djia_split_boundaries() {
    return {parse_date("2022-07-20"), parse_date("2022-10-14"), parse_date("2023-05-10")};
}

std::vector<Date> djia_calendar() {
    struct Range {
        const char* first;
        const char* last;
        std::size_t sessions;
    };
    constexpr Range ranges[] = {{"2020-06-01", "2022-07-20", 537},
                                {"2022-07-21", "2022-10-14", 60},
                                {"2022-10-15", "2023-05-10", 140}};
    std::vector<Date> out;
    for (const auto& r : ranges) {
        auto s = nyse_sessions(parse_date(r.first), parse_date(r.last));
        s.resize(std::min(s.size(), r.sessions));
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

}  // namespace spotv2
