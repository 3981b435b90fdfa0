#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "spotv2/calendar.hpp"

namespace spotv2 {

constexpr int kPointsPerDay = 14;  // 30-minute marks 09:30 .. 15:30 plus 15:59

/// Intraday estimation times in day units: j/13 for j=0..12 and 15:59
/// (389/390) in place of the close.
std::vector<double> intraday_taus();

enum class SeriesKind { Vol, Covol, Vov, Covov };

std::string_view to_string(SeriesKind kind);
SeriesKind series_kind_from_string(std::string_view s);

/// Index of the unordered pair (i, j), i != j, in row-major upper-triangle order.
std::size_t pair_index(std::size_t n_assets, std::size_t i, std::size_t j);
std::size_t pair_count(std::size_t n_assets);

/// Spot estimates on the global 30-minute grid: point b has a date and an
/// intraday index 0..13. Pair series are stored once per unordered pair.
struct SpotPanel {
    std::vector<std::string> assets;
    std::vector<Date> dates;
    std::vector<int> tau_index;
    std::vector<std::vector<double>> vol;    // [asset][b]
    std::vector<std::vector<double>> vov;    // [asset][b]
    std::vector<std::vector<double>> covol;  // [pair][b]
    std::vector<std::vector<double>> covov;  // [pair][b]

    std::size_t num_assets() const { return assets.size(); }
    std::size_t size() const { return dates.size(); }

    double covol_at(std::size_t i, std::size_t j, std::size_t b) const;
    double covov_at(std::size_t i, std::size_t j, std::size_t b) const;

    /// Allocates all series for n_assets assets and `points` grid points.
    void resize(std::size_t n_assets, std::size_t points);

    /// Appends another panel with the same assets.
    void append(const SpotPanel& other);
};

void validate(const SpotPanel& panel);

/// `date,tau_index,kind,asset_i,asset_j,value`; asset_j empty for vol/vov.
std::string panel_to_csv(const SpotPanel& panel, const std::string& lineage_comment = {});
SpotPanel panel_from_csv(std::string_view csv);

}  // namespace spotv2
