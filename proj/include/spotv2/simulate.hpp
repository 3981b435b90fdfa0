#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "spotv2/calendar.hpp"
#include "spotv2/ingest.hpp"
#include "spotv2/panel.hpp"

namespace spotv2::sim {

using Matrix = std::vector<std::vector<double>>;

/// Multi-asset stochastic-volatility model with mean-reverting variance:
///   dp_i = mu1_i dt + sqrt(V_i) dW_{i,1}
///   dV_i = kappa_i (theta_i - V_i) dt + sqrt(Vtilde_i) dW_{i,2}
/// with Vtilde_i = xi_i^2 V_i (CIR, default) or xi_i^2 (constant).
/// Brownian correlations are fixed: price_corr among W_{.,1}, vol_corr among
/// W_{.,2}, and leverage_i = corr(W_{i,1}, W_{i,2}).
struct SvModelSpec {
    std::vector<std::string> symbols;
    std::vector<double> mu1;
    std::vector<double> kappa;
    std::vector<double> theta;
    std::vector<double> xi;
    bool xi_scales_sqrt_v = true;
    Matrix price_corr;
    Matrix vol_corr;
    std::vector<double> leverage;
    std::vector<double> v0;

    std::size_t size() const { return symbols.size(); }

    double vov_of(std::size_t i, double v) const {
        return xi_scales_sqrt_v ? xi[i] * xi[i] * v : xi[i] * xi[i];
    }

    /// N uncorrelated assets with identical parameters.
    static SvModelSpec uniform(std::size_t n, double v0, double kappa, double theta, double xi);
};

void validate(const SvModelSpec& spec);

SvModelSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const SvModelSpec& spec);

struct SimulatedDay {
    Date day{};
    std::uint64_t seed = 0;
    std::vector<ingest::LogPriceGrid> grids;
    // Truth on the 14-point intraday grid.
    std::vector<std::vector<double>> true_spot;   // [asset][tau]
    std::vector<std::vector<double>> true_covol;  // [pair][tau]
    std::vector<std::vector<double>> true_vov;    // [asset][tau]
    std::vector<std::vector<double>> true_covov;  // [pair][tau]
    // Step-resolution variance path V_i(t_s), s = 0..n.
    std::vector<std::vector<double>> spot_path;
};

/// Per-day seeds are derived from (seed, day index), so days can be generated
/// independently and in any order.
std::uint64_t day_seed(std::uint64_t seed, std::size_t day_index);

/// Full-truncation Euler-Maruyama at step T/n, one independent path per day
/// starting from v0.
std::vector<SimulatedDay> simulate_paths(const SvModelSpec& spec, std::size_t days, int n,
                                         std::uint64_t seed, Date start = parse_date("2022-01-03"));

SimulatedDay simulate_day(const SvModelSpec& spec, int n, std::uint64_t seed, Date day);

/// Truth series of a run laid out as a panel (same grid as estimates).
SpotPanel truth_panel(const SvModelSpec& spec, const std::vector<SimulatedDay>& days);

/// Synthetic trades consistent with one grid: for each second a trade is
/// printed on venue 'N' with probability tick_prob (always for s = 0), plus
/// a few off-venue and out-of-session prints that the session filter drops.
std::string ticks_csv(const ingest::LogPriceGrid& grid, double tick_prob, std::uint64_t seed);

struct PlantedSpilloverOptions {
    std::size_t n_assets = 5;
    std::size_t days = 200;
    double spill_strength = 0.8;
    std::uint64_t seed = 1;
    double noise = 1.0;        // scales the followers' idiosyncratic log-variance shocks
    double regime_prob = 1.0;  // probability that a follower is coupled on a given day
    double theta = 0.04;
    double phi = 0.9;
    double sigma_z = 0.5;
    double rho = 0.3;
    double driver_rho = 0.0;  // price correlation of pairs (0, j); nonzero leaks V_0 into every node's covols
    double xi = 0.5;
    Date start = parse_date("2022-01-03");
};

struct PlantedSpillover {
    SpotPanel panel;
    std::vector<std::vector<int>> coupled;  // [follower asset][day], asset 0 unused
};

/// Panel-level generator in which asset 0 drives the followers with one
/// 30-minute lag. With z_i a stationary AR(1) (coefficient phi, std sigma_z,
/// followers scaled by noise) and A_i = theta*exp(z_i - s_i^2/2):
///   V_0,b   = A_0,b
///   V_j,b+1 = c_j,b+1 V_0,b + (1 - c_j,b+1) A_j,b+1,   c = spill * coupled_j(day)
///   C_ij    = rho sqrt(V_i V_j) (driver_rho for i = 0),  Vtilde_i = xi^2 V_i
///   Ctilde_0j = xi^2 c_j sqrt(V_0 V_j),  Ctilde_jk = xi^2 c_j c_k sqrt(V_j V_k)
/// so the coupling state is visible only through co-vol-of-vol.
PlantedSpillover planted_spillover_dataset(const PlantedSpilloverOptions& opt);

}  // namespace spotv2::sim
