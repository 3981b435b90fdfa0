#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

namespace spotv2 {

using Date = std::chrono::sys_days;

Date parse_date(std::string_view text);  // YYYY-MM-DD
std::string format_date(Date d);

bool is_weekend(Date d);

/// Full-day NYSE closures for the given calendar year (rule-based, no
/// one-off special closures).
std::vector<Date> nyse_holidays(int year);

bool is_nyse_session(Date d);

/// NYSE sessions in [first, last], inclusive.
std::vector<Date> nyse_sessions(Date first, Date last);

/// The n NYSE sessions starting at (or after) first.
std::vector<Date> next_sessions(Date first, std::size_t n);

struct SplitBoundaries {
    Date train_end;
    Date val_end;
    Date test_end;
};

/// Train/validation/test end dates of the DJIA study.
SplitBoundaries djia_split_boundaries();

/// 737-session calendar of the DJIA study: the exchange calendar restricted
/// to 537 / 60 / 140 sessions in the three partitions (the tick sample lacks
/// five exchange sessions; the earliest sessions of each range are kept).
std::vector<Date> djia_calendar();

}  // namespace spotv2
