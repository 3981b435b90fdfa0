#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "spotv2/baselines.hpp"
#include "spotv2/error.hpp"
#include "spotv2/parallel.hpp"

namespace spotv2::baselines {

namespace {

constexpr std::array<const char*, 7> kHarColumns{"intercept",    "own_current",   "own_lags_1_7",  "own_lags_8_13",
                                                 "cross_current", "cross_lags_1_7", "cross_lags_8_13"};

std::array<double, 3> own_aggregates(const std::vector<double>& h) {
    const auto n = h.size();
    std::array<double, 3> a{h[n - 1], 0.0, 0.0};
    for (std::size_t l = 1; l <= 7; ++l) a[1] += h[n - 1 - l];
    for (std::size_t l = 8; l <= 13; ++l) a[2] += h[n - 1 - l];
    a[1] /= 7.0;
    a[2] /= 6.0;
    return a;
}

void check_history(const std::vector<std::vector<double>>& history) {
    if (history.empty()) throw Error(ErrorKind::Argument, "HAR history has no assets");
    for (const auto& h : history) {
        if (h.size() < static_cast<std::size_t>(kHarHistory)) {
            throw Error(ErrorKind::Argument,
                        fmt::format("HAR needs {} values of history per asset, got {}", kHarHistory, h.size()));
        }
    }
}

void check_bs(const SpotPanel& panel, const std::vector<std::size_t>& bs) {
    for (auto b : bs) {
        if (b < static_cast<std::size_t>(kHarHistory - 1) || b + 1 >= panel.size()) {
            throw Error(ErrorKind::Argument,
                        fmt::format("HAR row at b={} needs 13 lags and a successor (panel has {} points)", b,
                                    panel.size()));
        }
    }
}

}  // namespace

std::vector<HarFeatures> har_features(const std::vector<std::vector<double>>& history) {
    check_history(history);
    const auto na = history.size();
    std::vector<std::array<double, 3>> own(na);
    for (std::size_t i = 0; i < na; ++i) own[i] = own_aggregates(history[i]);
    std::vector<HarFeatures> out(na);
    for (std::size_t i = 0; i < na; ++i) {
        for (int k = 0; k < 3; ++k) {
            out[i][k] = own[i][k];
            // Sum over the other assets; summing explicitly keeps the
            // cross term exactly zero for a single asset.
            double cross = 0.0;
            for (std::size_t j = 0; j < na; ++j) {
                if (j != i) cross += own[j][k];
            }
            out[i][3 + k] = cross;
        }
    }
    return out;
}

std::vector<std::vector<double>> panel_history(const SpotPanel& panel, std::size_t b) {
    if (b + 1 < static_cast<std::size_t>(kHarHistory) || b >= panel.size()) {
        throw Error(ErrorKind::Argument, fmt::format("no 14-point history ends at b={}", b));
    }
    std::vector<std::vector<double>> h(panel.num_assets());
    for (std::size_t i = 0; i < h.size(); ++i) {
        h[i].assign(panel.vol[i].begin() + static_cast<std::ptrdiff_t>(b + 1 - kHarHistory),
                    panel.vol[i].begin() + static_cast<std::ptrdiff_t>(b + 1));
    }
    return h;
}

double har_predict(const HarSpotCoeffs& c, const HarFeatures& f) {
    double y = c.mu;
    for (int k = 0; k < 3; ++k) y += c.phi[k] * f[k] + c.theta[k] * f[3 + k];
    return y;
}

HarSpotCoeffs harspot_fit(const SpotPanel& panel, const std::vector<std::size_t>& bs) {
    check_bs(panel, bs);
    const auto na = panel.num_assets();
    const bool cross = na > 1;
    const Eigen::Index cols = cross ? 7 : 4;
    const auto rows = static_cast<Eigen::Index>(bs.size() * na);
    if (rows < cols) throw Error(ErrorKind::Singular, fmt::format("HAR-Spot: {} rows for {} columns", rows, cols));
    Eigen::MatrixXd X(rows, cols);
    Eigen::VectorXd y(rows);
    Eigen::Index r = 0;
    for (auto b : bs) {
        const auto feats = har_features(panel_history(panel, b));
        for (std::size_t i = 0; i < na; ++i, ++r) {
            X(r, 0) = 1.0;
            for (Eigen::Index k = 1; k < cols; ++k) X(r, k) = feats[i][static_cast<std::size_t>(k - 1)];
            y(r) = panel.vol[i][b + 1];
        }
    }
    // Column scaling keeps the rank decision independent of variance units.
    Eigen::VectorXd scale = X.colwise().norm().transpose();
    for (Eigen::Index k = 0; k < cols; ++k) {
        if (scale(k) == 0.0) scale(k) = 1.0;
    }
    const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
    qr.setThreshold(1e-10);
    if (qr.rank() < cols) {
        std::string names;
        for (Eigen::Index k = qr.rank(); k < cols; ++k) {
            if (!names.empty()) names += ", ";
            names += kHarColumns[static_cast<std::size_t>(qr.colsPermutation().indices()(k))];
        }
        throw Error(ErrorKind::Singular,
                    fmt::format("HAR-Spot design is rank {} of {}; collinear columns: {}", qr.rank(), cols, names));
    }
    const Eigen::VectorXd beta = qr.solve(y).cwiseQuotient(scale);
    HarSpotCoeffs c;
    c.mu = beta(0);
    for (int k = 0; k < 3; ++k) {
        c.phi[k] = beta(1 + k);
        c.theta[k] = cross ? beta(4 + k) : 0.0;
    }
    return c;
}

HarSpotCoeffs harspot_fit(const SpotPanel& panel) {
    std::vector<std::size_t> bs;
    for (auto b = static_cast<std::size_t>(kHarHistory - 1); b + 1 < panel.size(); ++b) bs.push_back(b);
    return harspot_fit(panel, bs);
}

std::vector<std::vector<double>> harspot_forecast(const HarSpotCoeffs& c,
                                                  const std::vector<std::vector<double>>& history, int steps) {
    check_history(history);
    if (steps < 1) throw Error(ErrorKind::Argument, "forecast steps must be positive");
    auto h = history;
    std::vector<std::vector<double>> out(h.size());
    for (int s = 0; s < steps; ++s) {
        const auto feats = har_features(h);
        for (std::size_t i = 0; i < h.size(); ++i) {
            const double v = har_predict(c, feats[i]);
            out[i].push_back(v);
            h[i].push_back(v);
        }
    }
    return out;
}

nlohmann::json to_json(const HarSpotCoeffs& c) {
    return {{"model", "harspot"}, {"mu", c.mu}, {"phi", c.phi}, {"theta", c.theta}};
}

HarSpotCoeffs har_from_json(const nlohmann::json& j) {
    HarSpotCoeffs c;
    c.mu = j.at("mu").get<double>();
    c.phi = j.at("phi").get<std::array<double, 3>>();
    c.theta = j.at("theta").get<std::array<double, 3>>();
    return c;
}

// ------------------------------------------------------------------- GBT

void GbtParams::validate() const {
    if (n_trees < 1) throw Error(ErrorKind::Config, "gbt: n_trees must be >= 1");
    if (max_depth < 0) throw Error(ErrorKind::Config, "gbt: max_depth must be >= 0");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::Config, "gbt: learning_rate must be positive");
    if (lambda < 0.0 || gamma < 0.0 || min_child_weight < 0.0) {
        throw Error(ErrorKind::Config, "gbt: lambda, gamma and min_child_weight must be non-negative");
    }
    if (!(subsample > 0.0 && subsample <= 1.0) || !(colsample > 0.0 && colsample <= 1.0)) {
        throw Error(ErrorKind::Config, "gbt: subsample and colsample must lie in (0, 1]");
    }
}

nlohmann::json to_json(const GbtParams& p) {
    return {{"n_trees", p.n_trees},       {"max_depth", p.max_depth}, {"learning_rate", p.learning_rate},
            {"lambda", p.lambda},         {"gamma", p.gamma},         {"subsample", p.subsample},
            {"min_child_weight", p.min_child_weight}, {"colsample", p.colsample}, {"seed", p.seed}};
}

GbtParams gbt_params_from_json(const nlohmann::json& j) {
    GbtParams p;
    p.n_trees = j.value("n_trees", p.n_trees);
    p.max_depth = j.value("max_depth", p.max_depth);
    p.learning_rate = j.value("learning_rate", p.learning_rate);
    p.lambda = j.value("lambda", p.lambda);
    p.gamma = j.value("gamma", p.gamma);
    p.subsample = j.value("subsample", p.subsample);
    p.min_child_weight = j.value("min_child_weight", p.min_child_weight);
    p.colsample = j.value("colsample", p.colsample);
    p.seed = j.value("seed", p.seed);
    p.validate();
    return p;
}

namespace {

struct Split {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

double leaf_score(double g, double h, double lambda) { return g * g / (h + lambda); }

}  // namespace

GbtEnsemble gbt_fit(const Mat& X, const std::vector<double>& y, const GbtParams& params) {
    params.validate();
    if (X.rows == 0 || X.rows != y.size()) {
        throw Error(ErrorKind::Argument, fmt::format("gbt_fit: {} rows for {} targets", X.rows, y.size()));
    }
    const auto n = X.rows;
    const auto nf = X.cols;
    GbtEnsemble model;
    model.n_features = nf;

    std::vector<std::vector<std::size_t>> sorted(nf);
    for (std::size_t f = 0; f < nf; ++f) {
        auto& idx = sorted[f];
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return X(a, f) < X(b, f); });
    }

    std::mt19937_64 rng(params.seed);
    std::bernoulli_distribution take(params.subsample);
    std::vector<double> pred(n, model.base_score);
    std::vector<double> g(n);
    std::vector<int> node_of(n);
    std::vector<std::size_t> features(nf);
    std::iota(features.begin(), features.end(), std::size_t{0});
    const auto n_cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(params.colsample * nf)));

    for (int t = 0; t < params.n_trees; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            g[i] = pred[i] - y[i];
            node_of[i] = params.subsample < 1.0 ? (take(rng) ? 0 : -1) : 0;
        }
        std::vector<std::size_t> cols = features;
        if (n_cols < nf) {
            std::shuffle(cols.begin(), cols.end(), rng);
            cols.resize(n_cols);
            std::sort(cols.begin(), cols.end());
        }
        std::vector<TreeNode> tree(1);
        std::vector<double> G(1, 0.0), H(1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (node_of[i] == 0) {
                G[0] += g[i];
                H[0] += 1.0;
            }
        }
        std::vector<int> frontier{0};
        for (int depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
            std::vector<int> slot(tree.size(), -1);
            for (std::size_t k = 0; k < frontier.size(); ++k) slot[static_cast<std::size_t>(frontier[k])] = static_cast<int>(k);
            // Best split per frontier node and feature.
            std::vector<std::vector<Split>> best(cols.size(), std::vector<Split>(frontier.size()));
            parallel_for(cols.size(), params.workers, [&](std::size_t c) {
                const auto f = cols[c];
                std::vector<double> gl(frontier.size(), 0.0), hl(frontier.size(), 0.0), last(frontier.size(), 0.0);
                std::vector<char> seen(frontier.size(), 0);
                for (auto i : sorted[f]) {
                    const int nd = node_of[i];
                    if (nd < 0 || slot[static_cast<std::size_t>(nd)] < 0) continue;
                    const auto k = static_cast<std::size_t>(slot[static_cast<std::size_t>(nd)]);
                    const double v = X(i, f);
                    if (seen[k] && v > last[k]) {
                        const double gr = G[static_cast<std::size_t>(nd)] - gl[k];
                        const double hr = H[static_cast<std::size_t>(nd)] - hl[k];
                        if (hl[k] >= params.min_child_weight && hr >= params.min_child_weight) {
                            const double gain = 0.5 * (leaf_score(gl[k], hl[k], params.lambda) +
                                                       leaf_score(gr, hr, params.lambda) -
                                                       leaf_score(G[static_cast<std::size_t>(nd)],
                                                                  H[static_cast<std::size_t>(nd)], params.lambda)) -
                                                params.gamma;
                            if (gain > best[c][k].gain) {
                                // Midpoint, so rows outside the subsample fall on the nearer side.
                                double cut = 0.5 * (last[k] + v);
                                if (!(cut > last[k])) cut = v;
                                best[c][k] = {gain, static_cast<int>(f), cut};
                            }
                        }
                    }
                    gl[k] += g[i];
                    hl[k] += 1.0;
                    last[k] = v;
                    seen[k] = 1;
                }
            });
            std::vector<int> next;
            for (std::size_t k = 0; k < frontier.size(); ++k) {
                Split s;
                for (std::size_t c = 0; c < cols.size(); ++c) {
                    if (best[c][k].gain > s.gain) s = best[c][k];
                }
                if (s.feature < 0) continue;
                const auto nd = static_cast<std::size_t>(frontier[k]);
                tree[nd].feature = s.feature;
                tree[nd].threshold = s.threshold;
                tree[nd].left = static_cast<int>(tree.size());
                tree[nd].right = static_cast<int>(tree.size() + 1);
                tree.resize(tree.size() + 2);
                G.resize(tree.size(), 0.0);
                H.resize(tree.size(), 0.0);
                next.push_back(tree[nd].left);
                next.push_back(tree[nd].right);
            }
            for (std::size_t i = 0; i < n; ++i) {
                const int nd = node_of[i];
                if (nd < 0 || tree[static_cast<std::size_t>(nd)].feature < 0) continue;
                const auto& node = tree[static_cast<std::size_t>(nd)];
                const int child = X(i, static_cast<std::size_t>(node.feature)) < node.threshold ? node.left : node.right;
                if (child < static_cast<int>(slot.size()) && slot[static_cast<std::size_t>(child)] >= 0) continue;
                node_of[i] = child;
                G[static_cast<std::size_t>(child)] += g[i];
                H[static_cast<std::size_t>(child)] += 1.0;
            }
            frontier = std::move(next);
        }
        for (std::size_t k = 0; k < tree.size(); ++k) {
            if (tree[k].feature < 0) tree[k].value = -G[k] / (H[k] + params.lambda) * params.learning_rate;
        }
        model.trees.push_back(std::move(tree));
        for (std::size_t i = 0; i < n; ++i) {
            const auto& tr = model.trees.back();
            int k = 0;
            while (tr[static_cast<std::size_t>(k)].feature >= 0) {
                const auto& node = tr[static_cast<std::size_t>(k)];
                k = X(i, static_cast<std::size_t>(node.feature)) < node.threshold ? node.left : node.right;
            }
            pred[i] += tr[static_cast<std::size_t>(k)].value;
        }
    }
    return model;
}

double gbt_predict(const GbtEnsemble& model, const double* x) {
    double y = model.base_score;
    for (const auto& tr : model.trees) {
        int k = 0;
        while (tr[static_cast<std::size_t>(k)].feature >= 0) {
            const auto& node = tr[static_cast<std::size_t>(k)];
            k = x[node.feature] < node.threshold ? node.left : node.right;
        }
        y += tr[static_cast<std::size_t>(k)].value;
    }
    return y;
}

std::vector<double> gbt_predict(const GbtEnsemble& model, const Mat& X) {
    if (X.cols != model.n_features) {
        throw Error(ErrorKind::Shape, fmt::format("gbt_predict: {} features, model has {}", X.cols, model.n_features));
    }
    std::vector<double> out(X.rows);
    for (std::size_t r = 0; r < X.rows; ++r) out[r] = gbt_predict(model, &X.data[r * X.cols]);
    return out;
}

void gbt_design(const SpotPanel& panel, const std::vector<std::size_t>& bs, Mat& X, std::vector<double>& y) {
    check_bs(panel, bs);
    const auto na = panel.num_assets();
    X = Mat(bs.size() * na, 6);
    y.assign(bs.size() * na, 0.0);
    std::size_t r = 0;
    for (auto b : bs) {
        const auto feats = har_features(panel_history(panel, b));
        for (std::size_t i = 0; i < na; ++i, ++r) {
            for (std::size_t k = 0; k < 6; ++k) X(r, k) = feats[i][k];
            y[r] = panel.vol[i][b + 1];
        }
    }
}

std::vector<std::vector<double>> gbt_forecast(const GbtEnsemble& model,
                                              const std::vector<std::vector<double>>& history, int steps) {
    check_history(history);
    if (steps < 1) throw Error(ErrorKind::Argument, "forecast steps must be positive");
    auto h = history;
    std::vector<std::vector<double>> out(h.size());
    for (int s = 0; s < steps; ++s) {
        const auto feats = har_features(h);
        for (std::size_t i = 0; i < h.size(); ++i) {
            const double v = gbt_predict(model, feats[i].data());
            out[i].push_back(v);
            h[i].push_back(v);
        }
    }
    return out;
}

nlohmann::json to_json(const GbtEnsemble& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tr : m.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& nd : tr) nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.value});
        trees.push_back(std::move(nodes));
    }
    return {{"model", "gbt"}, {"n_features", m.n_features}, {"base_score", m.base_score}, {"trees", trees}};
}

GbtEnsemble gbt_from_json(const nlohmann::json& j) {
    GbtEnsemble m;
    m.n_features = j.at("n_features").get<std::size_t>();
    m.base_score = j.at("base_score").get<double>();
    for (const auto& tr : j.at("trees")) {
        std::vector<TreeNode> nodes;
        for (const auto& nd : tr) {
            nodes.push_back({nd.at(0).get<int>(), nd.at(1).get<double>(), nd.at(2).get<int>(), nd.at(3).get<int>(),
                             nd.at(4).get<double>()});
        }
        m.trees.push_back(std::move(nodes));
    }
    return m;
}

}  // namespace spotv2::baselines
