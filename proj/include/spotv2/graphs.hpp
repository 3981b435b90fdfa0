#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "spotv2/calendar.hpp"
#include "spotv2/matrix.hpp"
#include "spotv2/panel.hpp"

namespace spotv2::graphs {

enum class Horizon { Single, Multi };

std::string_view to_string(Horizon h);
Horizon horizon_from_string(std::string_view s);
int horizon_steps(Horizon h);  // 1 or 14

/// One fully connected graph at panel index b.
struct GraphSnapshot {
    std::size_t b = 0;
    std::size_t target_b = 0;  // panel index of the first target
    Date target_date{};
    Mat node;    // N x N(L+1)
    Mat edge;    // N(N-1)/2 x 3(L+1), pairs in pair_index order
    Mat target;  // N x horizon, raw variances
};

std::size_t node_feature_len(std::size_t n_assets, int lags);
std::size_t edge_feature_len(int lags);

/// Node row i: [V_i lags 0..L, then for each lag 0..L the covols C_ij for
/// j != i in ascending j]. Edge row (i<j): [Vt_i lags, Vt_j lags, Ct_ij lags].
/// Multi-step snapshots sit at the last intraday point of a day whose
/// successor day is complete; targets are that day's 14 vols.
std::vector<GraphSnapshot> build_snapshots(const SpotPanel& panel, int lags, Horizon horizon,
                                           int workers = 1);

struct DatasetSplit {
    std::vector<std::size_t> train, val, test;  // indices into the snapshot vector
    std::size_t dropped = 0;                    // target date past the last boundary
};

/// Assignment is by target date. Val and test may be empty; an empty train
/// partition is a configuration error.
DatasetSplit split_chronological(const std::vector<GraphSnapshot>& snaps,
                                 const SplitBoundaries& bounds);

struct PointCounts {
    std::size_t train = 0, val = 0, test = 0, dropped = 0;
};

/// Panel points per partition by their own date, before any lag trimming.
PointCounts count_points(const std::vector<Date>& dates, const SplitBoundaries& bounds);

void validate(const SplitBoundaries& bounds);

struct FeatureStats {
    std::vector<double> node_mean, node_std;
    std::vector<double> edge_mean, edge_std;
    std::vector<std::string> warnings;  // clamped dimensions
};

FeatureStats fit_stats(const std::vector<GraphSnapshot>& snaps,
                       const std::vector<std::size_t>& train);
void standardize(std::vector<GraphSnapshot>& snaps, const FeatureStats& stats);
void destandardize(std::vector<GraphSnapshot>& snaps, const FeatureStats& stats);

nlohmann::json to_json(const FeatureStats& s);
FeatureStats stats_from_json(const nlohmann::json& j);

std::string snapshot_to_csv(const GraphSnapshot& s, const std::string& lineage_comment = {});
GraphSnapshot snapshot_from_csv(std::string_view csv);

/// On-disk dataset: DIR/stats.json plus DIR/snapshots/{train,val,test}/{b}.csv.
struct Dataset {
    nlohmann::json meta;  // assets, lags, horizon, boundaries, counts, lineage
    FeatureStats stats;
    std::vector<GraphSnapshot> train, val, test;
};

void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace spotv2::graphs
