#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "spotv2/graphs.hpp"

namespace spotv2::cli {

namespace fs = std::filesystem;

/// Runs one subcommand; args excludes the program name. Errors are written
/// to `err` as a JSON object and mapped to the returned exit status
/// (2 for missing inputs and usage errors, 1 otherwise).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// SPOTV2_SEED when set, else `fallback`.
std::uint64_t resolve_seed(std::uint64_t fallback);

struct SimulateOptions {
    nlohmann::json spec;
    std::size_t days = 60;
    int n = 23400;
    std::uint64_t seed = 1;
    std::string start = "2022-01-03";
    fs::path out;
    fs::path ticks;  // empty: no tick files
    double tick_prob = 0.8;
    int workers = 1;
};
void simulate(const SimulateOptions& o, std::ostream& log);

struct PlantedOptions {
    std::size_t assets = 5;
    std::size_t days = 200;
    double spill = 0.8;
    double regime_prob = 1.0;
    std::uint64_t seed = 1;
    fs::path out;  // panel CSV
};
void simulate_planted(const PlantedOptions& o, std::ostream& log);

struct IngestOptions {
    fs::path in, out;
    char venue = 'N';
    int n = 23400;
    double beta = 0.5, alpha = 0.5;
    int workers = 1;
};
void ingest(const IngestOptions& o, std::ostream& log);

struct EstimateOptions {
    fs::path in, out;
    nlohmann::json freqs = nlohmann::json::object();
    int workers = 1;
};
void estimate(const EstimateOptions& o, std::ostream& log);

struct BuildOptions {
    fs::path panel, out;
    int lags = 42;
    graphs::Horizon horizon = graphs::Horizon::Single;
    nlohmann::json splits;  // train_end, val_end, test_end, or the string "djia"
    int workers = 1;
};
void build_graphs(const BuildOptions& o, std::ostream& log);

struct TrainOptions {
    nlohmann::json config = nlohmann::json::object();  // GAT hyperparameters
    std::string name = "spotv2net";
    fs::path data, out, history;
};
void train(const TrainOptions& o, std::ostream& log);

struct ForecastOptions {
    fs::path model, data, out;
    std::string split = "test";
};
void forecast(const ForecastOptions& o, std::ostream& log);

struct BaselineOptions {
    std::string model;  // har | gbt | lstm
    nlohmann::json config = nlohmann::json::object();
    fs::path data, panel, out, save, history;
    std::string split = "test";
    int workers = 1;
};
void baseline(const BaselineOptions& o, std::ostream& log);

struct EvaluateOptions {
    std::vector<fs::path> preds;
    fs::path actuals, out;
    nlohmann::json config = nlohmann::json::object();
    int workers = 1;
};
void evaluate(const EvaluateOptions& o, std::ostream& log);

struct ExplainOptions {
    fs::path model, data, out, traces;
    std::size_t nstar = 5;
    std::string split = "test";
    std::size_t max_snapshots = 0;  // 0: all
    nlohmann::json config = nlohmann::json::object();
    int workers = 1;
};
void explain(const ExplainOptions& o, std::ostream& log);

/// Every stage on simulated data under `out`; returns the report path.
fs::path pipeline(const nlohmann::json& config, const fs::path& out, int workers, std::ostream& log);

}  // namespace spotv2::cli
