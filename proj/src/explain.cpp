#include "spotv2/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "spotv2/error.hpp"
#include "spotv2/nn/optim.hpp"
#include "spotv2/parallel.hpp"

namespace spotv2::explain {

using nn::Tensor;

void ExplainConfig::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0) throw Error(ErrorKind::Config, "explain: penalties must be non-negative");
    if (iterations < 1) throw Error(ErrorKind::Config, "explain: iterations must be positive");
    if (!(lr > 0.0)) throw Error(ErrorKind::Config, "explain: lr must be positive");
}

nlohmann::json to_json(const ExplainConfig& c) {
    return {{"lambda1", c.lambda1}, {"lambda2", c.lambda2}, {"iterations", c.iterations}, {"lr", c.lr},
            {"seed", c.seed}};
}

ExplainConfig explain_config_from_json(const nlohmann::json& j) {
    ExplainConfig c;
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.iterations = j.value("iterations", c.iterations);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

gat::GatModel freeze(const gat::GatModel& model) {
    gat::GatModel m = model;
    auto fix = [](Tensor& t) {
        if (t.defined()) t = Tensor::constant(t.value());
    };
    for (auto& layer : m.layers) {
        for (auto& hp : layer.heads) {
            fix(hp.W);
            fix(hp.U);
            fix(hp.qa);
            fix(hp.qb);
            fix(hp.qe);
        }
    }
    fix(m.O);
    fix(m.u);
    m.params = {};
    return m;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

bool late_rise(const std::vector<double>& trace) {
    const std::size_t w = std::max<std::size_t>(1, trace.size() / 20);
    const std::size_t start = trace.size() / 10;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t s = start; s + w <= trace.size(); s += w) {
        const double avg = std::accumulate(trace.begin() + static_cast<std::ptrdiff_t>(s),
                                           trace.begin() + static_cast<std::ptrdiff_t>(s + w), 0.0) /
                           static_cast<double>(w);
        if (avg > prev + 1e-6 * std::abs(prev) + 1e-15) return true;
        prev = avg;
    }
    return false;
}

}  // namespace

ExplainResult explain_node(const gat::GatModel& frozen, const graphs::GraphSnapshot& snapshot, std::size_t i,
                           std::size_t n_star, const ExplainConfig& cfg) {
    cfg.validate();
    const auto n = snapshot.node.rows;
    if (i >= n) throw Error(ErrorKind::Argument, fmt::format("explain: node {} outside a {}-node graph", i, n));
    if (n_star < 1 || n_star > n) {
        throw Error(ErrorKind::Argument, fmt::format("explain: n_star={} must lie in [1, {}]", n_star, n));
    }
    const auto batch = gat::make_batch(snapshot);
    gat::ForwardOptions base;
    base.adjacency = cfg.adjacency;
    const auto full = gat::forward(frozen, batch, base).value();
    const auto out = full.cols;
    Mat ref(1, out);
    double ref_norm = 0.0;
    for (std::size_t h = 0; h < out; ++h) {
        ref(0, h) = full(i, h);
        ref_norm += full(i, h) * full(i, h);
    }
    ref_norm = std::max(ref_norm, 1e-300);

    std::mt19937_64 rng(mix(cfg.seed ^ mix(snapshot.b * 1315423911ULL + i)));
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat init(n, 1);
    for (auto& v : init.data) v = 0.1 * normal(rng);
    Tensor theta = Tensor::param(init);
    nn::ParamSet ps;
    ps.add("mask", theta);
    auto opt = nn::make_optimizer({"adam", cfg.lr, 0.9, 0.999, 1e-8, 0.0, 0.99});

    Mat keep(n, 1, 1.0), fixed(n, 1), others(n, 1, 1.0);
    keep(i, 0) = 0.0;
    fixed(i, 0) = 1.0;
    others(i, 0) = 0.0;
    const auto keep_t = Tensor::constant(keep);
    const auto fixed_t = Tensor::constant(fixed);
    const auto others_t = Tensor::constant(others);
    const auto ref_t = Tensor::constant(ref);
    const double n_other = std::max<double>(1.0, static_cast<double>(n - 1));

    ExplainResult res;
    res.target = i;
    res.b = snapshot.b;
    for (int it = 0; it < cfg.iterations; ++it) {
        ps.zero_grad();
        const auto soft = nn::sigmoid(theta);
        const auto m = nn::add(nn::mul(soft, keep_t), fixed_t);
        gat::ForwardOptions fo = base;
        fo.node_mask = m;
        const auto pred = nn::slice_rows(gat::forward(frozen, batch, fo), i, i + 1);
        const auto diff = nn::sub(pred, ref_t);
        const auto fidelity = nn::scale(nn::sum(nn::mul(diff, diff)), 1.0 / ref_norm);
        const auto sparsity = nn::scale(nn::sum(nn::mul(soft, others_t)), cfg.lambda1);
        // Entropy with a small floor so saturated masks keep finite logs.
        const auto p = nn::add(nn::scale(soft, 1.0 - 2e-12), Tensor::constant(Mat(n, 1, 1e-12)));
        const auto q = nn::add(nn::scale(p, -1.0), Tensor::constant(Mat(n, 1, 1.0)));
        const auto ent = nn::scale(nn::add(nn::mul(p, nn::log(p)), nn::mul(q, nn::log(q))), -1.0);
        const auto entropy = nn::scale(nn::sum(nn::mul(ent, others_t)), cfg.lambda2 / n_other);
        auto loss = nn::add(nn::add(fidelity, sparsity), entropy);
        const double value = loss.item();
        res.trace.push_back(value);
        if (!std::isfinite(value)) {
            std::string tail;
            for (std::size_t k = res.trace.size() > 5 ? res.trace.size() - 5 : 0; k < res.trace.size(); ++k) {
                tail += fmt::format(" {:.6g}", res.trace[k]);
            }
            throw Error(ErrorKind::Numerical,
                        fmt::format("explain: objective diverged at iteration {} (node {}, b={}); trace tail:{}", it,
                                    i, snapshot.b, tail));
        }
        loss.backward();
        opt->step(ps);
    }
    res.mask.resize(n);
    for (std::size_t k = 0; k < n; ++k) res.mask[k] = k == i ? 1.0 : 1.0 / (1.0 + std::exp(-theta.value()(k, 0)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
        if (a == i || c == i) return a == i && c != i;
        return res.mask[a] > res.mask[c];
    });
    res.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_star));
    res.non_monotone = late_rise(res.trace);
    return res;
}

std::vector<ExplainResult> explain_all(const gat::GatModel& model, const std::vector<graphs::GraphSnapshot>& snaps,
                                       std::size_t n_star, const ExplainConfig& cfg, int workers) {
    if (snaps.empty()) throw Error(ErrorKind::EmptyInput, "explain: no snapshots");
    const auto frozen = freeze(model);
    const auto n = snaps.front().node.rows;
    std::vector<ExplainResult> out(snaps.size() * n);
    parallel_for(out.size(), workers, [&](std::size_t k) {
        out[k] = explain_node(frozen, snaps[k / n], k % n, n_star, cfg);
    });
    return out;
}

Mat frequency_heatmap(const std::vector<ExplainResult>& results, std::size_t n_assets) {
    if (results.empty()) throw Error(ErrorKind::EmptyInput, "frequency heatmap: no explanation results");
    Mat counts(n_assets, n_assets);
    std::vector<double> stamps(n_assets, 0.0);
    for (const auto& r : results) {
        if (r.target >= n_assets) throw Error(ErrorKind::Argument, "frequency heatmap: target outside the universe");
        stamps[r.target] += 1.0;
        for (auto s : r.selected) counts(s, r.target) += 1.0;
    }
    for (std::size_t t = 0; t < n_assets; ++t) {
        if (stamps[t] == 0.0) continue;
        for (std::size_t s = 0; s < n_assets; ++s) counts(s, t) = 100.0 * counts(s, t) / stamps[t];
    }
    return counts;
}

std::string heatmap_to_csv(const Mat& heat, const std::vector<std::string>& assets) {
    std::string out = "source";
    for (std::size_t t = 0; t < heat.cols; ++t) out += "," + (t < assets.size() ? assets[t] : std::to_string(t));
    out += '\n';
    for (std::size_t s = 0; s < heat.rows; ++s) {
        out += s < assets.size() ? assets[s] : std::to_string(s);
        for (std::size_t t = 0; t < heat.cols; ++t) out += fmt::format(",{:.17g}", heat(s, t));
        out += '\n';
    }
    return out;
}

nlohmann::json to_json(const ExplainResult& r) {
    return {{"target", r.target}, {"b", r.b},         {"mask", r.mask},
            {"selected", r.selected}, {"trace", r.trace}, {"non_monotone", r.non_monotone}};
}

}  // namespace spotv2::explain
