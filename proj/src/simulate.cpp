#include "spotv2/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "spotv2/error.hpp"

namespace spotv2::sim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

void check_corr(const Matrix& m, std::size_t n, std::string_view what) {
    if (m.size() != n) throw Error(ErrorKind::Validation, fmt::format("{} must be {}x{}", what, n, n));
    for (std::size_t i = 0; i < n; ++i) {
        if (m[i].size() != n) {
            throw Error(ErrorKind::Validation, fmt::format("{} must be {}x{}", what, n, n));
        }
        if (std::abs(m[i][i] - 1.0) > 1e-12) {
            throw Error(ErrorKind::Validation, fmt::format("{} diagonal must be 1", what));
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(m[i][j] - m[j][i]) > 1e-12 || std::abs(m[i][j]) > 1.0) {
                throw Error(ErrorKind::Validation, fmt::format("{} must be symmetric in [-1,1]", what));
            }
        }
    }
}

/// Joint correlation of (W_{.,1}, W_{.,2}) and a factor B with B B^T = R.
Eigen::MatrixXd correlation_factor(const SvModelSpec& spec) {
    const auto n = static_cast<Eigen::Index>(spec.size());
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            r(i, j) = spec.price_corr[i][j];
            r(n + i, n + j) = spec.vol_corr[i][j];
        }
        r(i, n + i) = r(n + i, i) = spec.leverage[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r);
    const auto& lambda = eig.eigenvalues();
    if (lambda.minCoeff() < -1e-10) {
        throw Error(ErrorKind::Validation,
                    fmt::format("joint Brownian correlation is not positive semi-definite "
                                "(min eigenvalue {:.3g})",
                                lambda.minCoeff()));
    }
    Eigen::VectorXd root = lambda.cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

std::vector<std::size_t> tau_steps(int n) {
    std::vector<std::size_t> idx;
    for (double tau : intraday_taus()) {
        idx.push_back(static_cast<std::size_t>(std::llround(tau * n)));
    }
    return idx;
}

}  // namespace

SvModelSpec SvModelSpec::uniform(std::size_t n, double v0, double kappa, double theta, double xi) {
    SvModelSpec s;
    for (std::size_t i = 0; i < n; ++i) s.symbols.push_back(fmt::format("A{}", i));
    s.mu1.assign(n, 0.0);
    s.kappa.assign(n, kappa);
    s.theta.assign(n, theta);
    s.xi.assign(n, xi);
    s.v0.assign(n, v0);
    s.leverage.assign(n, 0.0);
    s.price_corr.assign(n, std::vector<double>(n, 0.0));
    s.vol_corr.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) s.price_corr[i][i] = s.vol_corr[i][i] = 1.0;
    return s;
}

void validate(const SvModelSpec& spec) {
    const auto n = spec.size();
    if (n == 0) throw Error(ErrorKind::Validation, "model spec has no assets");
    auto check_len = [&](const std::vector<double>& v, std::string_view what) {
        if (v.size() != n) {
            throw Error(ErrorKind::Validation, fmt::format("{} has {} entries, expected {}", what, v.size(), n));
        }
    };
    check_len(spec.mu1, "mu1");
    check_len(spec.kappa, "kappa");
    check_len(spec.theta, "theta");
    check_len(spec.xi, "xi");
    check_len(spec.leverage, "leverage");
    check_len(spec.v0, "v0");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(spec.v0[i] > 0.0)) throw Error(ErrorKind::Validation, "v0 must be positive");
        if (spec.kappa[i] < 0 || spec.theta[i] < 0 || spec.xi[i] < 0) {
            throw Error(ErrorKind::Validation, "kappa, theta and xi must be non-negative");
        }
        if (std::abs(spec.leverage[i]) > 1.0) throw Error(ErrorKind::Validation, "leverage outside [-1,1]");
    }
    check_corr(spec.price_corr, n, "price_corr");
    check_corr(spec.vol_corr, n, "vol_corr");
    correlation_factor(spec);
}

SvModelSpec spec_from_json(const nlohmann::json& j) {
    SvModelSpec s;
    const auto n = j.at("symbols").size();
    s.symbols = j.at("symbols").get<std::vector<std::string>>();
    auto vec = [&](const char* key, double fallback) {
        if (!j.contains(key)) return std::vector<double>(n, fallback);
        if (j.at(key).is_number()) return std::vector<double>(n, j.at(key).get<double>());
        return j.at(key).get<std::vector<double>>();
    };
    auto corr = [&](const char* key) {
        if (!j.contains(key)) {
            Matrix m(n, std::vector<double>(n, 0.0));
            for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
            return m;
        }
        if (j.at(key).is_number()) {
            const double rho = j.at(key).get<double>();
            Matrix m(n, std::vector<double>(n, rho));
            for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
            return m;
        }
        return j.at(key).get<Matrix>();
    };
    s.mu1 = vec("mu1", 0.0);
    s.kappa = vec("kappa", 0.0);
    s.theta = vec("theta", 0.04);
    s.xi = vec("xi", 0.0);
    s.v0 = vec("v0", 0.04);
    s.leverage = vec("leverage", 0.0);
    s.xi_scales_sqrt_v = j.value("xi_scales_sqrt_v", true);
    s.price_corr = corr("price_corr");
    s.vol_corr = corr("vol_corr");
    validate(s);
    return s;
}

nlohmann::json spec_to_json(const SvModelSpec& s) {
    return {{"symbols", s.symbols},   {"mu1", s.mu1},       {"kappa", s.kappa},
            {"theta", s.theta},       {"xi", s.xi},         {"xi_scales_sqrt_v", s.xi_scales_sqrt_v},
            {"v0", s.v0},             {"leverage", s.leverage}, {"price_corr", s.price_corr},
            {"vol_corr", s.vol_corr}};
}

std::uint64_t day_seed(std::uint64_t seed, std::size_t day_index) {
    return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(day_index) + 1));
}

SimulatedDay simulate_day(const SvModelSpec& spec, int n, std::uint64_t seed, Date day) {
    if (n < 2) throw Error(ErrorKind::Argument, "simulate: n must be at least 2");
    const auto factor = correlation_factor(spec);
    const auto na = spec.size();
    const double dt = 1.0 / n;
    const double sqdt = std::sqrt(dt);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    SimulatedDay out;
    out.day = day;
    out.seed = seed;
    out.grids.resize(na);
    out.spot_path.assign(na, std::vector<double>(static_cast<std::size_t>(n) + 1));
    std::vector<double> logp(na, std::log(100.0));
    std::vector<double> v = spec.v0;
    for (std::size_t i = 0; i < na; ++i) {
        auto& g = out.grids[i];
        g.symbol = spec.symbols[i];
        g.day = day;
        g.n = n;
        g.values.resize(static_cast<std::size_t>(n) + 1);
        g.values[0] = logp[i];
        out.spot_path[i][0] = v[i];
    }

    Eigen::VectorXd z(2 * na);
    Eigen::VectorXd w(2 * na);
    for (int s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < 2 * na; ++k) z[static_cast<Eigen::Index>(k)] = normal(rng);
        w.noalias() = factor * z;
        for (std::size_t i = 0; i < na; ++i) {
            const double vp = std::max(v[i], 0.0);
            const double vov = spec.vov_of(i, vp);
            logp[i] += spec.mu1[i] * dt + std::sqrt(vp) * sqdt * w[static_cast<Eigen::Index>(i)];
            v[i] += spec.kappa[i] * (spec.theta[i] - vp) * dt +
                    std::sqrt(vov) * sqdt * w[static_cast<Eigen::Index>(na + i)];
            out.grids[i].values[static_cast<std::size_t>(s) + 1] = logp[i];
            out.spot_path[i][static_cast<std::size_t>(s) + 1] = std::max(v[i], 0.0);
        }
    }

    const auto steps = tau_steps(n);
    const auto np = pair_count(na);
    out.true_spot.assign(na, std::vector<double>(steps.size()));
    out.true_vov.assign(na, std::vector<double>(steps.size()));
    out.true_covol.assign(np, std::vector<double>(steps.size()));
    out.true_covov.assign(np, std::vector<double>(steps.size()));
    for (std::size_t b = 0; b < steps.size(); ++b) {
        for (std::size_t i = 0; i < na; ++i) {
            const double vi = out.spot_path[i][steps[b]];
            out.true_spot[i][b] = vi;
            out.true_vov[i][b] = spec.vov_of(i, vi);
            for (std::size_t j = i + 1; j < na; ++j) {
                const double vj = out.spot_path[j][steps[b]];
                const auto p = pair_index(na, i, j);
                out.true_covol[p][b] = spec.price_corr[i][j] * std::sqrt(vi * vj);
                out.true_covov[p][b] =
                    spec.vol_corr[i][j] * std::sqrt(spec.vov_of(i, vi) * spec.vov_of(j, vj));
            }
        }
    }
    return out;
}

std::vector<SimulatedDay> simulate_paths(const SvModelSpec& spec, std::size_t days, int n,
                                         std::uint64_t seed, Date start) {
    validate(spec);
    const auto dates = next_sessions(start, days);
    std::vector<SimulatedDay> out;
    out.reserve(days);
    for (std::size_t d = 0; d < days; ++d) {
        out.push_back(simulate_day(spec, n, day_seed(seed, d), dates[d]));
    }
    return out;
}

SpotPanel truth_panel(const SvModelSpec& spec, const std::vector<SimulatedDay>& days) {
    SpotPanel panel;
    panel.assets = spec.symbols;
    const auto na = spec.size();
    panel.resize(na, days.size() * kPointsPerDay);
    for (std::size_t d = 0; d < days.size(); ++d) {
        for (int t = 0; t < kPointsPerDay; ++t) {
            const auto b = d * kPointsPerDay + static_cast<std::size_t>(t);
            panel.dates[b] = days[d].day;
            panel.tau_index[b] = t;
            for (std::size_t i = 0; i < na; ++i) {
                panel.vol[i][b] = days[d].true_spot[i][t];
                panel.vov[i][b] = days[d].true_vov[i][t];
            }
            for (std::size_t p = 0; p < pair_count(na); ++p) {
                panel.covol[p][b] = days[d].true_covol[p][t];
                panel.covov[p][b] = days[d].true_covov[p][t];
            }
        }
    }
    return panel;
}

std::string ticks_csv(const ingest::LogPriceGrid& grid, double tick_prob, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const ingest::Session session;
    const std::int64_t step = session.length() / grid.n;

    std::string out = "timestamp,price,venue\n";
    out.reserve(static_cast<std::size_t>(grid.n * tick_prob * 32.0) + 256);
    // A pre-open print that the session filter must drop.
    out += fmt::format("{},{:.6f},N\n", session.start_ns - ingest::kNanosPerSecond,
                       std::exp(grid.values[0]) * 1.01);
    out += fmt::format("{},{:.6f},N\n", session.start_ns, std::exp(grid.values[0]));
    for (int s = 1; s <= grid.n; ++s) {
        const double u = unif(rng);
        const double off_venue = unif(rng);
        const bool print = unif(rng) < tick_prob;
        // A trade inside (t_{s-1}, t_s) carries the price at t_s.
        const double frac = 0.001 + 0.998 * u;
        const auto ts = session.start_ns + step * s - static_cast<std::int64_t>(frac * step);
        const double price = std::exp(grid.values[static_cast<std::size_t>(s)]);
        if (print) out += fmt::format("{},{:.6f},N\n", ts, price);
        if (off_venue < 0.02) out += fmt::format("{},{:.6f},Q\n", ts, price * 1.002);
    }
    out += fmt::format("{},{:.6f},N\n", session.end_ns + ingest::kNanosPerSecond,
                       std::exp(grid.values.back()) * 0.99);
    return out;
}

PlantedSpillover planted_spillover_dataset(const PlantedSpilloverOptions& opt) {
    if (opt.spill_strength < 0.0 || opt.spill_strength > 1.0) {
        throw Error(ErrorKind::Argument, "spill_strength must lie in [0, 1]");
    }
    if (opt.n_assets < 1 || opt.days < 1) throw Error(ErrorKind::Argument, "empty planted dataset");
    const auto na = opt.n_assets;
    const auto points = opt.days * kPointsPerDay;

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(opt.regime_prob);

    PlantedSpillover out;
    out.panel.resize(na, points);
    out.coupled.assign(na, std::vector<int>(opt.days, 0));
    for (std::size_t j = 1; j < na; ++j) {
        for (std::size_t d = 0; d < opt.days; ++d) out.coupled[j][d] = coin(rng) ? 1 : 0;
    }
    const auto dates = next_sessions(opt.start, opt.days);

    std::vector<double> sigma(na, opt.sigma_z * opt.noise);
    sigma[0] = opt.sigma_z;
    std::vector<double> z(na);
    for (std::size_t i = 0; i < na; ++i) z[i] = sigma[i] * normal(rng);
    const double innov = std::sqrt(1.0 - opt.phi * opt.phi);

    auto& p = out.panel;
    std::vector<double> coupling(na, 0.0);
    for (std::size_t b = 0; b < points; ++b) {
        const auto d = b / kPointsPerDay;
        p.dates[b] = dates[d];
        p.tau_index[b] = static_cast<int>(b % kPointsPerDay);
        if (b > 0) {
            for (std::size_t i = 0; i < na; ++i) z[i] = opt.phi * z[i] + sigma[i] * innov * normal(rng);
        }
        for (std::size_t i = 0; i < na; ++i) {
            const double a = opt.theta * std::exp(z[i] - 0.5 * sigma[i] * sigma[i]);
            if (i == 0) {
                p.vol[0][b] = a;
                coupling[0] = 1.0;
                continue;
            }
            coupling[i] = opt.spill_strength * out.coupled[i][d];
            p.vol[i][b] = b == 0 ? a : coupling[i] * p.vol[0][b - 1] + (1.0 - coupling[i]) * a;
        }
        for (std::size_t i = 0; i < na; ++i) {
            p.vov[i][b] = opt.xi * opt.xi * p.vol[i][b];
            for (std::size_t j = i + 1; j < na; ++j) {
                const auto k = pair_index(na, i, j);
                const double root = std::sqrt(p.vol[i][b] * p.vol[j][b]);
                p.covol[k][b] = (i == 0 ? opt.driver_rho : opt.rho) * root;
                p.covov[k][b] = opt.xi * opt.xi * coupling[i] * coupling[j] * root;
            }
        }
    }
    return out;
}

}  // namespace spotv2::sim
