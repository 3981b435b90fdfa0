#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spotv2/calendar.hpp"

namespace spotv2::ingest {

constexpr std::int64_t kNanosPerSecond = 1'000'000'000;
constexpr std::int64_t kNanosPerHour = 3600 * kNanosPerSecond;

struct Tick {
    std::int64_t ns = 0;  // since midnight, exchange time
    double price = 0.0;
    char venue = '?';
};

struct TickSeries {
    std::string symbol;
    std::vector<Tick> records;  // sorted by ns (stable for ties)
    std::size_t skipped = 0;    // malformed rows dropped by the parser
};

/// Half-open trading session [start, end).
struct Session {
    std::int64_t start_ns = 9 * kNanosPerHour + 30 * 60 * kNanosPerSecond;
    std::int64_t end_ns = 16 * kNanosPerHour;

    std::int64_t length() const { return end_ns - start_ns; }
};

/// n+1 log-prices on the uniform partition of one session; T is the day
/// length in day units.
struct LogPriceGrid {
    std::string symbol;
    Date day{};
    std::vector<double> values;
    int n = 0;
    double T = 1.0;

    double time(int s) const { return T * static_cast<double>(s) / static_cast<double>(n); }
};

void validate(const LogPriceGrid& grid);

/// Parses `timestamp,price,venue` CSV. A header-only body yields an empty
/// series; rows that are all malformed raise EmptyInput.
TickSeries parse_ticks(std::string_view csv, std::string symbol);

/// Accepts integer nanoseconds or ISO-8601 (`[YYYY-MM-DD{T| }]HH:MM:SS[.f][Z]`).
std::int64_t parse_timestamp(std::string_view text);

TickSeries filter_session(const TickSeries& ticks, char venue, const Session& session = {});

/// Grid point s carries the log of the latest trade at or before t_s; points
/// before the first trade are back-filled with it.
LogPriceGrid resample_last_tick(const TickSeries& ticks, int n, const Session& session = {},
                                Date day = {});

double jump_threshold(double beta, double alpha, int n, double T = 1.0);

/// Zeroes 1-second returns above beta*(T/n)^alpha and re-cumulates the path.
LogPriceGrid truncate_jumps(const LogPriceGrid& grid, double beta, double alpha);

std::size_t distinct_timestamps(const TickSeries& ticks);

std::string grid_to_csv(const LogPriceGrid& grid, const std::string& lineage_comment = {});
LogPriceGrid grid_from_csv(std::string_view csv, std::string symbol, Date day);

/// `{symbol}_{YYYY-MM-DD}.csv` naming used by every per-asset-day file.
std::string asset_day_filename(const std::string& symbol, Date day);
bool parse_asset_day_filename(const std::string& name, std::string& symbol, Date& day);

}  // namespace spotv2::ingest
