#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "spotv2/gat.hpp"
#include "spotv2/graphs.hpp"
#include "spotv2/matrix.hpp"

namespace spotv2::explain {

struct ExplainConfig {
    double lambda1 = 0.005;  // mask size
    double lambda2 = 0.1;    // mask entropy
    int iterations = 200;
    double lr = 0.01;
    std::uint64_t seed = 1;
    const Mat* adjacency = nullptr;  // passed through to the model
    void validate() const;
};

nlohmann::json to_json(const ExplainConfig& c);
ExplainConfig explain_config_from_json(const nlohmann::json& j);

struct ExplainResult {
    std::size_t target = 0;
    std::size_t b = 0;
    std::vector<double> mask;           // N values in [0, 1], target fixed at 1
    std::vector<std::size_t> selected;  // top n_star node ids, target first
    std::vector<double> trace;          // objective per iteration
    bool non_monotone = false;          // smoothed trace rose late in the run
};

/// Copy of the model whose weights are constants, safe to share between
/// threads that differentiate through it.
gat::GatModel freeze(const gat::GatModel& model);

/// Learns a soft node mask for node i's prediction. The objective is the
/// squared prediction change relative to the full prediction's squared norm,
/// plus lambda1 * sum(mask) and lambda2 * mean binary entropy over the other
/// nodes.
ExplainResult explain_node(const gat::GatModel& frozen, const graphs::GraphSnapshot& snapshot, std::size_t i,
                           std::size_t n_star, const ExplainConfig& cfg = {});

/// Every node of every snapshot; results ordered by (snapshot, node).
std::vector<ExplainResult> explain_all(const gat::GatModel& model, const std::vector<graphs::GraphSnapshot>& snaps,
                                       std::size_t n_star, const ExplainConfig& cfg = {}, int workers = 1);

/// out(source, target) = 100 * inclusions / timestamps explained for target.
Mat frequency_heatmap(const std::vector<ExplainResult>& results, std::size_t n_assets);

std::string heatmap_to_csv(const Mat& heat, const std::vector<std::string>& assets);
nlohmann::json to_json(const ExplainResult& r);

}  // namespace spotv2::explain
