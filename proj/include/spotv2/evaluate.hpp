#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "spotv2/graphs.hpp"
#include "spotv2/matrix.hpp"
#include "spotv2/panel.hpp"

namespace spotv2::eval {

enum class LossKind { Mse, Qlike };
std::string to_string(LossKind k);

/// Forecasts of one model: values[t] is N x H for the origin b[t]; the
/// actual for (t, i, h) is the panel vol at b[t] + 1 + h.
struct ForecastSet {
    std::string model;
    graphs::Horizon horizon = graphs::Horizon::Single;
    std::vector<std::size_t> b;
    std::vector<Mat> values;
};

/// Actuals aligned with `f` (same shapes).
std::vector<Mat> actuals_for(const ForecastSet& f, const SpotPanel& panel);

/// Per-instant loss: mean over assets (and horizon in multi mode).
std::vector<double> loss_series(const std::vector<Mat>& preds, const std::vector<Mat>& actuals, LossKind kind,
                                graphs::Horizon mode, const std::vector<std::size_t>* b = nullptr);

double aggregate_mse(const std::vector<Mat>& preds, const std::vector<Mat>& actuals, graphs::Horizon mode);
/// Mean of a/f - log(a/f) - 1 with a the actual and f the forecast.
double aggregate_qlike(const std::vector<Mat>& preds, const std::vector<Mat>& actuals, graphs::Horizon mode,
                       const std::vector<std::size_t>* b = nullptr);

struct DmResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Positive statistic means A has the larger loss. hac_lag < 0 selects h-1.
DmResult dm_test(const std::vector<double>& loss_a, const std::vector<double>& loss_b, int h = 1, int hac_lag = -1);

struct McsOptions {
    double alpha = 0.05;
    int bootstrap = 5000;
    int block_len = 0;  // 0 selects floor(T^(1/3))
    std::uint64_t seed = 1;
    int workers = 1;
};

struct McsResult {
    std::vector<std::size_t> survivors;  // ascending model index
    std::vector<double> p_values;        // per model, running-max MCS p-value
    std::vector<std::size_t> eliminated; // elimination order
    int block_len = 0;
};

/// losses[m] is the loss series of model m.
McsResult mcs(const std::vector<std::vector<double>>& losses, const McsOptions& opt = {});

struct ReportOptions {
    McsOptions mcs;
    int dm_hac_lag = -1;
};

/// Aggregates, pairwise DM matrices and MCS for both losses.
nlohmann::json build_report(const std::vector<ForecastSet>& sets, const SpotPanel& panel,
                            const ReportOptions& opt = {});

/// Long CSV `b,asset,h,pred`, h counted from 1, raw variance units.
std::string forecasts_to_csv(const ForecastSet& f, const std::vector<std::string>& assets);
ForecastSet forecasts_from_csv(std::string_view text, const std::vector<std::string>& assets,
                               const std::string& model);

}  // namespace spotv2::eval
