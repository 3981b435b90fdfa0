#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "spotv2/graphs.hpp"
#include "spotv2/nn/optim.hpp"
#include "spotv2/nn/tensor.hpp"

namespace spotv2::gat {

struct GatConfig {
    std::vector<int> hidden{400, 200};
    int heads = 4;
    int lags = 42;
    double slope = 0.1;  // LeakyReLU inside the attention score
    std::string activation = "relu";
    double dropout = 0.1;       // on each layer's input
    double attn_dropout = 0.1;  // on normalized attention rows
    bool use_edges = true;      // false gives SpotV2Net-NE
    int out_dim = 1;
    nn::OptimConfig optim{"adamw", 1e-4, 0.9, 0.999, 1e-8, 0.01, 0.99};
    int batch_size = 128;
    int epochs = 120;
    std::uint64_t seed = 1;
    bool keep_best = false;  // retain the best-validation epoch

    static GatConfig single_step();
    static GatConfig multi_step();
    void validate() const;
};

nlohmann::json to_json(const GatConfig& c);
/// Unspecified keys take the defaults of `base`.
GatConfig gat_config_from_json(const nlohmann::json& j, const GatConfig& base = GatConfig::single_step());

struct HeadParams {
    nn::Tensor W;   // M' x M
    nn::Tensor U;   // M' x E (edge variant only)
    nn::Tensor qa;  // 1 x M', source half of q'
    nn::Tensor qb;  // 1 x M', neighbour half
    nn::Tensor qe;  // 1 x M', edge block (edge variant only)
};

struct LayerParams {
    std::vector<HeadParams> heads;
    bool concat = true;
    std::size_t in_dim = 0, out_dim = 0;  // out_dim per head
};

struct GatModel {
    GatConfig cfg;
    std::size_t n_assets = 0;
    std::size_t node_dim = 0, edge_dim = 0;
    std::vector<LayerParams> layers;
    nn::Tensor O;  // out_dim x M''
    nn::Tensor u;  // 1 x out_dim
    nn::ParamSet params;

    std::size_t embedding_dim() const;
};

/// Glorot-uniform weights, zero output bias.
GatModel make_model(const GatConfig& cfg, std::size_t n_assets, std::size_t node_dim, std::size_t edge_dim);

/// A batch of snapshots stacked node-wise: rows s*N + i.
struct Batch {
    std::size_t graphs = 0;
    std::size_t n = 0;
    nn::Tensor x;  // graphs*N x M
    nn::Tensor e;  // graphs*N(N-1)/2 x E
    nn::Tensor y;  // graphs*N x out_dim
};

Batch make_batch(const std::vector<const graphs::GraphSnapshot*>& snaps);
Batch make_batch(const graphs::GraphSnapshot& s);

struct ForwardOptions {
    bool train = false;
    std::mt19937_64* rng = nullptr;  // required when train
    const Mat* adjacency = nullptr;  // N x N 0/1; null means fully connected
    nn::Tensor node_mask;            // graphs*N x 1; scales inputs and attention
    std::vector<std::vector<Mat>>* attention = nullptr;  // [layer][head], filled if set
};

/// Predictions, graphs*N x out_dim.
nn::Tensor forward(const GatModel& model, const Batch& batch, const ForwardOptions& opt = {});

/// Per-head attention rows (graphs*N x N) of one layer for its input h,
/// after masking and (when training) attention dropout.
std::vector<nn::Tensor> attention_matrix(const LayerParams& layer, const GatConfig& cfg, const nn::Tensor& h,
                                         const nn::Tensor& e, std::size_t n, const ForwardOptions& opt = {});

/// Concatenated (or head-averaged) activated representations.
nn::Tensor layer_forward(const LayerParams& layer, const GatConfig& cfg, const nn::Tensor& h,
                         const nn::Tensor& e, std::size_t n, const ForwardOptions& opt = {});

struct EpochLoss {
    int epoch = 0;
    double train = 0.0;
    double val = 0.0;  // NaN without validation data
};

std::vector<EpochLoss> train(GatModel& model, const std::vector<graphs::GraphSnapshot>& train_set,
                             const std::vector<graphs::GraphSnapshot>& val_set);

double evaluate_mse(const GatModel& model, const std::vector<graphs::GraphSnapshot>& snaps,
                    int batch_size = 128);

/// One prediction matrix (N x out_dim) per snapshot.
std::vector<Mat> predict(const GatModel& model, const std::vector<graphs::GraphSnapshot>& snaps,
                         int batch_size = 128);

/// `extra` fields (name, lineage) are merged into the manifest config.
void save_model(const std::filesystem::path& path, const GatModel& model, const nlohmann::json& extra = {});
GatModel load_model(const std::filesystem::path& path);

}  // namespace spotv2::gat
