#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "spotv2/graphs.hpp"
#include "spotv2/matrix.hpp"
#include "spotv2/nn/optim.hpp"
#include "spotv2/nn/tensor.hpp"
#include "spotv2/panel.hpp"

namespace spotv2::baselines {

// ---------------------------------------------------------------- HAR-Spot

constexpr int kHarHistory = 14;  // current value plus 13 lags

/// Own aggregates (current, mean of lags 1-7, mean of lags 8-13) followed by
/// the sums of the same aggregates over all other assets.
using HarFeatures = std::array<double, 6>;

struct HarSpotCoeffs {
    double mu = 0.0;
    std::array<double, 3> phi{};
    std::array<double, 3> theta{};
};

/// history[i] holds at least 14 values of asset i, most recent last.
std::vector<HarFeatures> har_features(const std::vector<std::vector<double>>& history);

/// Pooled OLS of V_{i,b+1} on the HAR regressors at every b in `bs`
/// (each needs 13 lags and a successor). Throws Singular naming the
/// collinear columns.
HarSpotCoeffs harspot_fit(const SpotPanel& panel, const std::vector<std::size_t>& bs);
HarSpotCoeffs harspot_fit(const SpotPanel& panel);

double har_predict(const HarSpotCoeffs& c, const HarFeatures& f);

/// Recursive forecasts: [asset][step].
std::vector<std::vector<double>> harspot_forecast(const HarSpotCoeffs& c,
                                                  const std::vector<std::vector<double>>& history, int steps);

/// Trailing 14-value histories of every asset ending at b.
std::vector<std::vector<double>> panel_history(const SpotPanel& panel, std::size_t b);

nlohmann::json to_json(const HarSpotCoeffs& c);
HarSpotCoeffs har_from_json(const nlohmann::json& j);

// ------------------------------------------------------------------- GBT

struct GbtParams {
    int n_trees = 400;
    int max_depth = 5;
    double learning_rate = 0.2;
    double lambda = 1.5;
    double gamma = 0.0;
    double subsample = 0.7;
    double min_child_weight = 5.0;
    double colsample = 1.0;
    std::uint64_t seed = 1;
    int workers = 1;

    void validate() const;
};

nlohmann::json to_json(const GbtParams& p);
GbtParams gbt_params_from_json(const nlohmann::json& j);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;  // leaf output, already shrunk by the learning rate
};

struct GbtEnsemble {
    std::vector<std::vector<TreeNode>> trees;
    std::size_t n_features = 0;
    double base_score = 0.0;
};

/// Squared-error boosting with exact greedy splits; X is rows x features.
GbtEnsemble gbt_fit(const Mat& X, const std::vector<double>& y, const GbtParams& params);
double gbt_predict(const GbtEnsemble& model, const double* x);
std::vector<double> gbt_predict(const GbtEnsemble& model, const Mat& X);

/// HAR aggregates pooled across assets, rows (b, i).
void gbt_design(const SpotPanel& panel, const std::vector<std::size_t>& bs, Mat& X, std::vector<double>& y);

/// Recursive multi-step on HAR aggregates: [asset][step].
std::vector<std::vector<double>> gbt_forecast(const GbtEnsemble& model,
                                              const std::vector<std::vector<double>>& history, int steps);

nlohmann::json to_json(const GbtEnsemble& m);
GbtEnsemble gbt_from_json(const nlohmann::json& j);

// ------------------------------------------------------------------ LSTM

struct LstmConfig {
    std::vector<int> hidden{400, 200};
    double dropout = 0.4;
    int out_dim = 1;  // per asset
    nn::OptimConfig optim{"adamw", 5e-4, 0.9, 0.999, 1e-8, 0.01, 0.99};
    int batch_size = 64;
    int epochs = 120;
    std::uint64_t seed = 1;

    static LstmConfig single_step();
    static LstmConfig multi_step();
    void validate() const;
};

nlohmann::json to_json(const LstmConfig& c);
LstmConfig lstm_config_from_json(const nlohmann::json& j, const LstmConfig& base = LstmConfig::single_step());

struct LstmLayer {
    nn::Tensor Wf, Wi, Wo, Wc;  // H x D
    nn::Tensor Uf, Ui, Uo, Uc;  // H x H
    nn::Tensor bf, bi, bo, bc;  // 1 x H
};

struct LstmModel {
    LstmConfig cfg;
    std::size_t n_assets = 0;
    std::size_t input_dim = 0;
    std::size_t steps = 0;  // sequence length L+1
    std::vector<LstmLayer> layers;
    nn::Tensor O;  // (N*out_dim) x H_last
    nn::Tensor u;  // 1 x (N*out_dim)
    nn::ParamSet params;
};

LstmModel make_lstm(const LstmConfig& cfg, std::size_t n_assets, std::size_t input_dim, std::size_t steps);

/// (L+1) x (N + N(N-1)/2) sequence, oldest first: all vols then all covols
/// (pair order) at each step, read from a snapshot's node features.
Mat lstm_sequence(const graphs::GraphSnapshot& s, int lags);

struct LstmGates {
    std::vector<Mat> f, i, o;  // [layer] gate activations at the last step
};

/// Batch of sequences [graph] -> predictions (graphs*N x out_dim).
nn::Tensor lstm_forward(const LstmModel& model, const std::vector<Mat>& sequences, bool train = false,
                        std::mt19937_64* rng = nullptr, LstmGates* gates = nullptr);

struct LstmEpoch {
    int epoch = 0;
    double train = 0.0;
    double val = 0.0;
};

std::vector<LstmEpoch> lstm_train(LstmModel& model, const std::vector<graphs::GraphSnapshot>& train_set,
                                  const std::vector<graphs::GraphSnapshot>& val_set, int lags);
std::vector<Mat> lstm_predict(const LstmModel& model, const std::vector<graphs::GraphSnapshot>& snaps, int lags);

/// `extra` fields (name, lineage) are merged into the manifest config.
void save_lstm(const std::filesystem::path& path, const LstmModel& model, const nlohmann::json& extra = {});
LstmModel load_lstm(const std::filesystem::path& path);

}  // namespace spotv2::baselines
