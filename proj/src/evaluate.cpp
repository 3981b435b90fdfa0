#include "spotv2/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <tuple>

#include <fmt/format.h>

#include "spotv2/calendar.hpp"
#include "spotv2/error.hpp"
#include "spotv2/io.hpp"
#include "spotv2/parallel.hpp"

namespace spotv2::eval {

std::string to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "qlike"; }

namespace {

void check_aligned(const std::vector<Mat>& preds, const std::vector<Mat>& actuals, graphs::Horizon mode) {
    if (preds.empty()) throw Error(ErrorKind::EmptyInput, "no forecasts to evaluate");
    if (preds.size() != actuals.size()) {
        throw Error(ErrorKind::Shape, fmt::format("{} forecast instants vs {} actual instants", preds.size(),
                                                  actuals.size()));
    }
    const auto h = static_cast<std::size_t>(graphs::horizon_steps(mode));
    for (std::size_t t = 0; t < preds.size(); ++t) {
        if (!preds[t].same_shape(actuals[t]) || preds[t].cols != h || preds[t].rows == 0) {
            throw Error(ErrorKind::Shape, fmt::format("instant {}: forecast {}x{} vs actual {}x{} ({} mode)", t,
                                                      preds[t].rows, preds[t].cols, actuals[t].rows,
                                                      actuals[t].cols, graphs::to_string(mode)));
        }
    }
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::vector<Mat> actuals_for(const ForecastSet& f, const SpotPanel& panel) {
    const auto h = static_cast<std::size_t>(graphs::horizon_steps(f.horizon));
    std::vector<Mat> out;
    out.reserve(f.b.size());
    for (auto b : f.b) {
        if (b + h >= panel.size()) {
            throw Error(ErrorKind::Validation,
                        fmt::format("{}: origin b={} has no {}-step actual in a {}-point panel", f.model, b, h,
                                    panel.size()));
        }
        Mat a(panel.num_assets(), h);
        for (std::size_t i = 0; i < a.rows; ++i) {
            for (std::size_t s = 0; s < h; ++s) a(i, s) = panel.vol[i][b + 1 + s];
        }
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<double> loss_series(const std::vector<Mat>& preds, const std::vector<Mat>& actuals, LossKind kind,
                                graphs::Horizon mode, const std::vector<std::size_t>* b) {
    check_aligned(preds, actuals, mode);
    if (kind == LossKind::Qlike) {
        std::string bad;
        int shown = 0, count = 0;
        for (std::size_t t = 0; t < preds.size(); ++t) {
            for (std::size_t i = 0; i < preds[t].rows; ++i) {
                for (std::size_t h = 0; h < preds[t].cols; ++h) {
                    if (!(preds[t](i, h) > 0.0) || !(actuals[t](i, h) > 0.0)) {
                        ++count;
                        if (shown++ < 10) bad += fmt::format(" (b={}, i={})", b ? (*b)[t] : t, i);
                    }
                }
            }
        }
        if (count > 0) {
            throw Error(ErrorKind::Domain,
                        fmt::format("QLIKE needs positive forecasts and actuals; {} offending cells:{}{}", count, bad,
                                    count > 10 ? " ..." : ""));
        }
    }
    std::vector<double> out(preds.size());
    for (std::size_t t = 0; t < preds.size(); ++t) {
        double s = 0.0;
        for (std::size_t k = 0; k < preds[t].size(); ++k) {
            const double f = preds[t].data[k];
            const double a = actuals[t].data[k];
            if (kind == LossKind::Mse) {
                s += (f - a) * (f - a);
            } else {
                const double r = a / f;
                s += r - std::log(r) - 1.0;
            }
        }
        out[t] = s / static_cast<double>(preds[t].size());
    }
    return out;
}

double aggregate_mse(const std::vector<Mat>& preds, const std::vector<Mat>& actuals, graphs::Horizon mode) {
    return mean_of(loss_series(preds, actuals, LossKind::Mse, mode));
}

double aggregate_qlike(const std::vector<Mat>& preds, const std::vector<Mat>& actuals, graphs::Horizon mode,
                       const std::vector<std::size_t>* b) {
    return mean_of(loss_series(preds, actuals, LossKind::Qlike, mode, b));
}

DmResult dm_test(const std::vector<double>& loss_a, const std::vector<double>& loss_b, int h, int hac_lag) {
    if (loss_a.size() != loss_b.size()) {
        throw Error(ErrorKind::Shape, fmt::format("DM: series lengths {} and {} differ", loss_a.size(), loss_b.size()));
    }
    const auto T = loss_a.size();
    if (T < 30) throw Error(ErrorKind::Argument, fmt::format("DM: need at least 30 observations, got {}", T));
    if (h < 1) throw Error(ErrorKind::Argument, "DM: horizon must be >= 1");
    const int lag = hac_lag < 0 ? h - 1 : hac_lag;
    if (static_cast<std::size_t>(lag) >= T) throw Error(ErrorKind::Argument, "DM: HAC lag must be below T");
    std::vector<double> d(T);
    for (std::size_t t = 0; t < T; ++t) d[t] = loss_a[t] - loss_b[t];
    const double dbar = mean_of(d);
    auto gamma = [&](int k) {
        double s = 0.0;
        for (std::size_t t = static_cast<std::size_t>(k); t < T; ++t) {
            s += (d[t] - dbar) * (d[t - static_cast<std::size_t>(k)] - dbar);
        }
        return s / static_cast<double>(T);
    };
    double var = gamma(0);
    for (int k = 1; k <= lag; ++k) var += 2.0 * (1.0 - static_cast<double>(k) / (lag + 1)) * gamma(k);
    double scale2 = 0.0;
    for (double x : d) scale2 += x * x;
    scale2 /= static_cast<double>(T);
    if (!(var > 1e-24 * scale2) || !(var > 0.0)) {
        throw Error(ErrorKind::Degenerate, "DM: loss differential has zero HAC variance");
    }
    DmResult r;
    r.statistic = dbar / std::sqrt(var / static_cast<double>(T));
    r.p_value = std::erfc(std::abs(r.statistic) / std::sqrt(2.0));
    return r;
}

McsResult mcs(const std::vector<std::vector<double>>& losses, const McsOptions& opt) {
    const auto M = losses.size();
    if (M < 2) throw Error(ErrorKind::Argument, "MCS needs at least two models");
    if (opt.bootstrap < 100) throw Error(ErrorKind::Argument, "MCS needs at least 100 bootstrap replications");
    if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw Error(ErrorKind::Argument, "MCS alpha must lie in (0, 1)");
    const auto T = losses[0].size();
    for (const auto& l : losses) {
        if (l.size() != T) throw Error(ErrorKind::Shape, "MCS: loss series lengths differ");
    }
    if (T == 0) throw Error(ErrorKind::EmptyInput, "MCS: empty loss series");
    const auto block = opt.block_len > 0 ? static_cast<std::size_t>(opt.block_len)
                                         : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::cbrt(static_cast<double>(T)) + 1e-9)));
    if (block >= T) {
        throw Error(ErrorKind::Argument, fmt::format("MCS: block length {} must be below T={}", block, T));
    }
    std::vector<double> mean(M);
    for (std::size_t m = 0; m < M; ++m) mean[m] = mean_of(losses[m]);

    // Bootstrap means per replication and model, from a shared index draw.
    const auto B = static_cast<std::size_t>(opt.bootstrap);
    std::vector<double> boot(B * M);
    parallel_for(B, opt.workers, [&](std::size_t r) {
        std::mt19937_64 rng(mix(opt.seed ^ mix(r + 1)));
        std::uniform_int_distribution<std::size_t> start(0, T - block);
        std::vector<double> acc(M, 0.0);
        std::size_t filled = 0;
        while (filled < T) {
            const auto s = start(rng);
            for (std::size_t k = 0; k < block && filled < T; ++k, ++filled) {
                for (std::size_t m = 0; m < M; ++m) acc[m] += losses[m][s + k];
            }
        }
        for (std::size_t m = 0; m < M; ++m) boot[r * M + m] = acc[m] / static_cast<double>(T);
    });

    McsResult res;
    res.block_len = static_cast<int>(block);
    res.p_values.assign(M, 1.0);
    std::vector<std::size_t> alive(M);
    std::iota(alive.begin(), alive.end(), std::size_t{0});
    double running = 0.0;
    while (alive.size() > 1) {
        const auto k = alive.size();
        std::vector<double> tstat(k * k, 0.0), sd(k * k, 0.0);
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t c = a + 1; c < k; ++c) {
                const double dbar = mean[alive[a]] - mean[alive[c]];
                double v = 0.0;
                for (std::size_t r = 0; r < B; ++r) {
                    const double e = boot[r * M + alive[a]] - boot[r * M + alive[c]] - dbar;
                    v += e * e;
                }
                const double s = std::sqrt(v / static_cast<double>(B));
                sd[a * k + c] = sd[c * k + a] = s;
                double t = 0.0;
                if (s > 0.0) {
                    t = dbar / s;
                } else if (dbar != 0.0) {
                    t = std::copysign(std::numeric_limits<double>::infinity(), dbar);
                }
                tstat[a * k + c] = t;
                tstat[c * k + a] = -t;
            }
        }
        double TR = 0.0;
        std::size_t worst = 0;
        double worst_score = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < k; ++a) {
            double row = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                if (c == a) continue;
                TR = std::max(TR, std::abs(tstat[a * k + c]));
                row = std::max(row, tstat[a * k + c]);
            }
            if (row > worst_score) {
                worst_score = row;
                worst = a;
            }
        }
        std::size_t exceed = 0;
        for (std::size_t r = 0; r < B; ++r) {
            double tb = 0.0;
            for (std::size_t a = 0; a < k; ++a) {
                for (std::size_t c = a + 1; c < k; ++c) {
                    const double s = sd[a * k + c];
                    if (s <= 0.0) continue;
                    const double dbar = mean[alive[a]] - mean[alive[c]];
                    const double db = boot[r * M + alive[a]] - boot[r * M + alive[c]];
                    tb = std::max(tb, std::abs(db - dbar) / s);
                }
            }
            if (tb >= TR) ++exceed;
        }
        const double p = static_cast<double>(exceed) / static_cast<double>(B);
        running = std::max(running, p);
        if (p >= opt.alpha) break;
        res.p_values[alive[worst]] = running;
        res.eliminated.push_back(alive[worst]);
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(worst));
    }
    for (auto m : alive) res.p_values[m] = alive.size() == 1 ? 1.0 : std::max(running, res.p_values[m]);
    res.survivors = alive;
    return res;
}

nlohmann::json build_report(const std::vector<ForecastSet>& sets, const SpotPanel& panel, const ReportOptions& opt) {
    if (sets.empty()) throw Error(ErrorKind::EmptyInput, "no forecast sets to evaluate");
    for (const auto& s : sets) {
        if (s.horizon != sets[0].horizon || s.b != sets[0].b) {
            throw Error(ErrorKind::Validation,
                        fmt::format("forecasts of {} and {} cover different origins or horizons", sets[0].model,
                                    s.model));
        }
    }
    const auto mode = sets[0].horizon;
    // Multi-step losses are already per-day averages, so the DM lag stays 0
    // unless overridden.
    const int dm_h = 1;
    nlohmann::json report;
    report["horizon"] = graphs::to_string(mode);
    report["instants"] = sets[0].b.size();
    report["settings"] = {{"dm", {{"sided", "two"}, {"variance", "bartlett_hac"},
                                  {"hac_lag", opt.dm_hac_lag < 0 ? dm_h - 1 : opt.dm_hac_lag}}},
                          {"mcs", {{"alpha", opt.mcs.alpha}, {"bootstrap", opt.mcs.bootstrap},
                                   {"statistic", "range"}, {"seed", opt.mcs.seed}}}};
    std::vector<std::vector<Mat>> actual;
    for (const auto& s : sets) actual.push_back(actuals_for(s, panel));
    nlohmann::json aggregates = nlohmann::json::array();
    for (const auto& s : sets) aggregates.push_back({{"model", s.model}});
    for (auto kind : {LossKind::Mse, LossKind::Qlike}) {
        const auto key = to_string(kind);
        std::vector<std::size_t> ok;
        std::vector<std::vector<double>> ls;
        for (std::size_t k = 0; k < sets.size(); ++k) {
            try {
                ls.push_back(loss_series(sets[k].values, actual[k], kind, mode, &sets[k].b));
                ok.push_back(k);
                aggregates[k][key] = mean_of(ls.back());
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Domain) throw;
                aggregates[k][key] = nullptr;
                aggregates[k][key + "_error"] = e.what();
            }
        }
        nlohmann::json names = nlohmann::json::array();
        for (auto k : ok) names.push_back(sets[k].model);
        nlohmann::json dm = nlohmann::json::array();
        for (std::size_t a = 0; a < ls.size(); ++a) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < ls.size(); ++c) {
                if (a == c) {
                    row.push_back(nullptr);
                    continue;
                }
                try {
                    const auto r = dm_test(ls[a], ls[c], dm_h, opt.dm_hac_lag);
                    row.push_back({{"statistic", r.statistic}, {"p_value", r.p_value}});
                } catch (const Error& e) {
                    row.push_back({{"error", e.what()}});
                }
            }
            dm.push_back(std::move(row));
        }
        nlohmann::json m = nullptr;
        if (ls.size() >= 2) {
            try {
                const auto r = mcs(ls, opt.mcs);
                nlohmann::json surv = nlohmann::json::array();
                for (auto k : r.survivors) surv.push_back(sets[ok[k]].model);
                nlohmann::json per = nlohmann::json::object();
                for (std::size_t k = 0; k < ls.size(); ++k) {
                    const bool in = std::find(r.survivors.begin(), r.survivors.end(), k) != r.survivors.end();
                    per[sets[ok[k]].model] = {{"p_value", r.p_values[k]}, {"in_mcs", in}};
                }
                m = {{"survivors", surv}, {"models", per}, {"block_len", r.block_len}};
            } catch (const Error& e) {
                m = {{"error", e.what()}};
            }
        }
        report[key] = {{"models", names}, {"dm", dm}, {"mcs", m}};
    }
    report["aggregates"] = aggregates;
    return report;
}

std::string forecasts_to_csv(const ForecastSet& f, const std::vector<std::string>& assets) {
    const auto h = static_cast<std::size_t>(graphs::horizon_steps(f.horizon));
    std::string out = "b,asset,h,pred\n";
    for (std::size_t t = 0; t < f.b.size(); ++t) {
        const auto& v = f.values[t];
        if (v.cols != h) throw Error(ErrorKind::Shape, "forecast width does not match its horizon");
        if (v.rows != assets.size()) throw Error(ErrorKind::Shape, "forecast rows do not match the asset list");
        for (std::size_t i = 0; i < v.rows; ++i) {
            for (std::size_t s = 0; s < h; ++s) out += fmt::format("{},{},{},{:.17g}\n", f.b[t], assets[i], s + 1, v(i, s));
        }
    }
    return out;
}

ForecastSet forecasts_from_csv(std::string_view text, const std::vector<std::string>& assets,
                               const std::string& model) {
    const auto lines = io::data_lines(text);
    if (lines.empty()) throw Error(ErrorKind::EmptyInput, "forecast file has no header");
    const auto header = io::split_csv(lines[0]);
    if (header.size() != 4 || header[0] != "b" || header[1] != "asset" || header[2] != "h" || header[3] != "pred") {
        throw Error(ErrorKind::Format, "forecast header must be b,asset,h,pred");
    }
    std::map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < assets.size(); ++i) index[assets[i]] = i;
    std::map<std::size_t, std::vector<std::tuple<std::size_t, std::size_t, double>>> rows;
    std::size_t max_h = 0;
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const auto cells = io::split_csv(lines[k]);
        if (cells.size() != 4) throw Error(ErrorKind::Format, fmt::format("forecast line {} has {} cells", k + 1, cells.size()));
        const auto it = index.find(cells[1]);
        if (it == index.end()) {
            throw Error(ErrorKind::Validation, fmt::format("forecast line {} names unknown asset {}", k + 1, cells[1]));
        }
        const auto h = io::parse_int(cells[2]);
        if (h < 1 || h > kPointsPerDay) throw Error(ErrorKind::Format, fmt::format("forecast line {}: bad h {}", k + 1, h));
        max_h = std::max(max_h, static_cast<std::size_t>(h));
        rows[static_cast<std::size_t>(io::parse_int(cells[0]))].emplace_back(it->second, static_cast<std::size_t>(h - 1),
                                                                              io::parse_double(cells[3]));
    }
    ForecastSet f;
    f.model = model;
    f.horizon = max_h == 1 ? graphs::Horizon::Single : graphs::Horizon::Multi;
    const auto width = static_cast<std::size_t>(graphs::horizon_steps(f.horizon));
    for (const auto& [b, cells] : rows) {
        if (cells.size() != assets.size() * width) {
            throw Error(ErrorKind::Format, fmt::format("{}: origin b={} has {} cells, expected {}", model, b,
                                                       cells.size(), assets.size() * width));
        }
        Mat m(assets.size(), width, std::numeric_limits<double>::quiet_NaN());
        for (const auto& [i, h, v] : cells) m(i, h) = v;
        for (double v : m.data) {
            if (std::isnan(v)) throw Error(ErrorKind::Format, fmt::format("{}: origin b={} repeats a cell", model, b));
        }
        f.b.push_back(b);
        f.values.push_back(std::move(m));
    }
    return f;
}

}  // namespace spotv2::eval
