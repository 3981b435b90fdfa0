#include "spotv2/ingest.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "spotv2/error.hpp"
#include "spotv2/io.hpp"

namespace spotv2::ingest {

void validate(const LogPriceGrid& grid) {
    if (grid.n < 1 || grid.values.size() != static_cast<std::size_t>(grid.n) + 1) {
        throw Error(ErrorKind::Validation,
                    fmt::format("grid for '{}' has {} values, expected n+1={}", grid.symbol,
                                grid.values.size(), grid.n + 1));
    }
    for (double v : grid.values) {
        if (!std::isfinite(v)) {
            throw Error(ErrorKind::Validation,
                        fmt::format("grid for '{}' holds a non-finite value", grid.symbol));
        }
    }
}

std::int64_t parse_timestamp(std::string_view text) {
    text = io::trim(text);
    if (text.empty()) throw Error(ErrorKind::Format, "empty timestamp");
    if (text.find(':') == std::string_view::npos) return io::parse_int(text);

    auto sep = text.find_first_of("T ");
    if (sep != std::string_view::npos) text.remove_prefix(sep + 1);
    if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
    // Drop a trailing numeric UTC offset, e.g. -04:00.
    if (text.size() > 8) {
        auto off = text.find_first_of("+-", 8);
        if (off != std::string_view::npos) text = text.substr(0, off);
    }
    if (text.size() < 8 || text[2] != ':' || text[5] != ':') {
        throw Error(ErrorKind::Format, fmt::format("bad time '{}'", text));
    }
    const auto hh = io::parse_int(text.substr(0, 2));
    const auto mm = io::parse_int(text.substr(3, 2));
    const auto ss = io::parse_int(text.substr(6, 2));
    if (hh > 23 || mm > 59 || ss > 60) throw Error(ErrorKind::Format, "time out of range");
    std::int64_t frac_ns = 0;
    if (text.size() > 8) {
        if (text[8] != '.') throw Error(ErrorKind::Format, fmt::format("bad time '{}'", text));
        auto digits = text.substr(9);
        if (digits.empty() || digits.size() > 9) {
            throw Error(ErrorKind::Format, fmt::format("bad fraction '{}'", digits));
        }
        frac_ns = io::parse_int(digits);
        for (std::size_t k = digits.size(); k < 9; ++k) frac_ns *= 10;
    }
    return (hh * 3600 + mm * 60 + ss) * kNanosPerSecond + frac_ns;
}

TickSeries parse_ticks(std::string_view csv, std::string symbol) {
    TickSeries out;
    out.symbol = std::move(symbol);
    auto lines = io::data_lines(csv);
    if (lines.empty()) return out;

    auto header = io::split_csv(lines.front());
    if (header.size() != 3 || io::trim(header[0]) != "timestamp" || io::trim(header[1]) != "price" ||
        io::trim(header[2]) != "venue") {
        throw Error(ErrorKind::Format,
                    fmt::format("unreadable tick header '{}'", std::string(lines.front())));
    }
    for (std::size_t r = 1; r < lines.size(); ++r) {
        auto cols = io::split_csv(lines[r]);
        if (cols.size() != 3) {
            ++out.skipped;
            continue;
        }
        try {
            Tick t;
            t.ns = parse_timestamp(cols[0]);
            t.price = io::parse_double(cols[1]);
            auto venue = io::trim(cols[2]);
            if (venue.size() != 1 || !(t.price > 0.0) || !std::isfinite(t.price)) {
                ++out.skipped;
                continue;
            }
            t.venue = venue.front();
            out.records.push_back(t);
        } catch (const Error&) {
            ++out.skipped;
        }
    }
    if (out.records.empty() && lines.size() > 1) {
        throw Error(ErrorKind::EmptyInput,
                    fmt::format("no valid tick rows for '{}' ({} skipped)", out.symbol, out.skipped));
    }
    std::stable_sort(out.records.begin(), out.records.end(),
                     [](const Tick& a, const Tick& b) { return a.ns < b.ns; });
    return out;
}

TickSeries filter_session(const TickSeries& ticks, char venue, const Session& session) {
    TickSeries out;
    out.symbol = ticks.symbol;
    out.skipped = ticks.skipped;
    for (const auto& t : ticks.records) {
        if (t.venue == venue && t.ns >= session.start_ns && t.ns < session.end_ns) {
            out.records.push_back(t);
        }
    }
    return out;
}

LogPriceGrid resample_last_tick(const TickSeries& ticks, int n, const Session& session, Date day) {
    if (n < 1) throw Error(ErrorKind::Argument, "resample: n must be positive");
    if (ticks.records.empty()) {
        throw Error(ErrorKind::NoData,
                    fmt::format("no ticks for '{}' on {}", ticks.symbol, format_date(day)));
    }
    LogPriceGrid grid;
    grid.symbol = ticks.symbol;
    grid.day = day;
    grid.n = n;
    grid.values.resize(static_cast<std::size_t>(n) + 1);

    const auto& rec = ticks.records;
    std::size_t next = 0;  // first record with ns > current grid time
    double last_log = std::log(rec.front().price);
    for (int s = 0; s <= n; ++s) {
        const std::int64_t t = session.start_ns + session.length() * s / n;
        while (next < rec.size() && rec[next].ns <= t) {
            last_log = std::log(rec[next].price);
            ++next;
        }
        grid.values[static_cast<std::size_t>(s)] = last_log;
    }
    return grid;
}

double jump_threshold(double beta, double alpha, int n, double T) {
    return beta * std::pow(T / static_cast<double>(n), alpha);
}

LogPriceGrid truncate_jumps(const LogPriceGrid& grid, double beta, double alpha) {
    validate(grid);
    const double theta = jump_threshold(beta, alpha, grid.n, grid.T);
    LogPriceGrid out = grid;
    double level = grid.values.front();
    for (std::size_t s = 1; s < grid.values.size(); ++s) {
        double r = grid.values[s] - grid.values[s - 1];
        if (std::abs(r) > theta) r = 0.0;
        level += r;
        out.values[s] = level;
    }
    return out;
}

std::size_t distinct_timestamps(const TickSeries& ticks) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < ticks.records.size(); ++i) {
        if (i == 0 || ticks.records[i].ns != ticks.records[i - 1].ns) ++count;
    }
    return count;
}

std::string grid_to_csv(const LogPriceGrid& grid, const std::string& lineage_comment) {
    std::string out;
    out.reserve(grid.values.size() * 28 + 64);
    if (!lineage_comment.empty()) out += lineage_comment + "\n";
    out += "grid_index,log_price\n";
    for (std::size_t s = 0; s < grid.values.size(); ++s) {
        out += fmt::format("{},{:.17g}\n", s, grid.values[s]);
    }
    return out;
}

LogPriceGrid grid_from_csv(std::string_view csv, std::string symbol, Date day) {
    auto lines = io::data_lines(csv);
    if (lines.empty() || io::trim(lines.front()) != "grid_index,log_price") {
        throw Error(ErrorKind::Format, fmt::format("bad grid header for '{}'", symbol));
    }
    LogPriceGrid grid;
    grid.symbol = std::move(symbol);
    grid.day = day;
    grid.values.reserve(lines.size() - 1);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        auto cols = io::split_csv(lines[r]);
        if (cols.size() != 2 || io::parse_int(cols[0]) != static_cast<long long>(r - 1)) {
            throw Error(ErrorKind::Format, fmt::format("bad grid row {} for '{}'", r, grid.symbol));
        }
        grid.values.push_back(io::parse_double(cols[1]));
    }
    grid.n = static_cast<int>(grid.values.size()) - 1;
    validate(grid);
    return grid;
}

std::string asset_day_filename(const std::string& symbol, Date day) {
    return fmt::format("{}_{}.csv", symbol, format_date(day));
}

bool parse_asset_day_filename(const std::string& name, std::string& symbol, Date& day) {
    // SYMBOL_YYYY-MM-DD.csv
    if (name.size() < 16 || name.substr(name.size() - 4) != ".csv") return false;
    auto stem = name.substr(0, name.size() - 4);
    auto us = stem.rfind('_');
    if (us == std::string::npos || stem.size() - us - 1 != 10) return false;
    try {
        day = parse_date(stem.substr(us + 1));
    } catch (const Error&) {
        return false;
    }
    symbol = stem.substr(0, us);
    return !symbol.empty();
}

}  // namespace spotv2::ingest
