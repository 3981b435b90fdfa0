#include "spotv2/gat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "spotv2/error.hpp"
#include "spotv2/nn/checkpoint.hpp"

namespace spotv2::gat {

using nn::Tensor;

GatConfig GatConfig::single_step() { return GatConfig{}; }

GatConfig GatConfig::multi_step() {
    GatConfig c;
    c.hidden = {400, 400};
    c.heads = 5;
    c.dropout = 0.2;
    c.attn_dropout = 0.0;
    c.out_dim = kPointsPerDay;
    c.optim.lr = 5e-5;
    return c;
}

void GatConfig::validate() const {
    if (hidden.empty()) throw Error(ErrorKind::Config, "gat: at least one hidden layer is required");
    for (int h : hidden) {
        if (h < 1) throw Error(ErrorKind::Config, "gat: hidden dimensions must be positive");
    }
    if (heads < 1) throw Error(ErrorKind::Config, "gat: heads must be positive");
    if (lags < 0) throw Error(ErrorKind::Config, "gat: lags must be non-negative");
    if (!(slope > 0.0)) throw Error(ErrorKind::Config, "gat: LeakyReLU slope must be positive");
    if (dropout < 0.0 || dropout >= 1.0 || attn_dropout < 0.0 || attn_dropout >= 1.0) {
        throw Error(ErrorKind::Config, "gat: dropout rates must lie in [0, 1)");
    }
    if (out_dim < 1) throw Error(ErrorKind::Config, "gat: out_dim must be positive");
    if (batch_size < 1 || epochs < 0) throw Error(ErrorKind::Config, "gat: batch_size >= 1 and epochs >= 0 required");
    if (activation != "relu" && activation != "tanh" && activation != "sigmoid" && activation != "identity") {
        throw Error(ErrorKind::Config, fmt::format("gat: unknown activation '{}'", activation));
    }
    if (!(optim.lr > 0.0)) throw Error(ErrorKind::Config, "gat: learning rate must be positive");
}

nlohmann::json to_json(const GatConfig& c) {
    return {{"hidden", c.hidden},
            {"heads", c.heads},
            {"lags", c.lags},
            {"slope", c.slope},
            {"activation", c.activation},
            {"dropout", c.dropout},
            {"attn_dropout", c.attn_dropout},
            {"use_edges", c.use_edges},
            {"out_dim", c.out_dim},
            {"optim", nn::to_json(c.optim)},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"keep_best", c.keep_best}};
}

GatConfig gat_config_from_json(const nlohmann::json& j, const GatConfig& base) {
    GatConfig c = base;
    c.hidden = j.value("hidden", c.hidden);
    c.heads = j.value("heads", c.heads);
    c.lags = j.value("lags", c.lags);
    c.slope = j.value("slope", c.slope);
    c.activation = j.value("activation", c.activation);
    c.dropout = j.value("dropout", c.dropout);
    c.attn_dropout = j.value("attn_dropout", c.attn_dropout);
    c.use_edges = j.value("use_edges", c.use_edges);
    c.out_dim = j.value("out_dim", c.out_dim);
    if (j.contains("optim")) {
        auto merged = nn::to_json(c.optim);
        merged.update(j.at("optim"));
        c.optim = nn::optim_from_json(merged);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.keep_best = j.value("keep_best", c.keep_best);
    c.validate();
    return c;
}

std::size_t GatModel::embedding_dim() const { return layers.back().out_dim; }

namespace {

Mat glorot(std::size_t rows, std::size_t cols, double fan_in, double fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat m(rows, cols);
    for (auto& v : m.data) v = dist(rng);
    return m;
}

Tensor activate(const Tensor& x, const std::string& act) {
    if (act == "relu") return nn::relu(x);
    if (act == "tanh") return nn::tanh(x);
    if (act == "sigmoid") return nn::sigmoid(x);
    return x;
}

bool all_ones(const Mat& a) {
    return std::all_of(a.data.begin(), a.data.end(), [](double v) { return v != 0.0; });
}

struct HeadOut {
    Tensor H;
    Tensor alpha;
};

HeadOut head_attention(const HeadParams& hp, const GatConfig& cfg, const Tensor& h, const Tensor& e,
                       std::size_t n, const ForwardOptions& opt) {
    Tensor H = nn::matmul_nt(h, hp.W);
    Tensor logits = nn::pair_sum(nn::matmul_nt(H, hp.qa), nn::matmul_nt(H, hp.qb), n);
    if (cfg.use_edges && n >= 2) {
        Tensor pe = nn::matmul_nt(nn::matmul_nt(e, hp.U), hp.qe);
        logits = nn::add(logits, nn::pair_scatter(pe, n));
    }
    logits = nn::leaky_relu(logits, cfg.slope);
    if (opt.adjacency && !all_ones(*opt.adjacency)) {
        const auto& a = *opt.adjacency;
        if (a.rows != n || a.cols != n) {
            throw Error(ErrorKind::Shape, fmt::format("adjacency is {}x{}, expected {}x{}", a.rows, a.cols, n, n));
        }
        Mat mask(logits.rows(), n);
        for (std::size_t r = 0; r < mask.rows; ++r) {
            for (std::size_t j = 0; j < n; ++j) {
                mask(r, j) = a(r % n, j) != 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
            }
        }
        logits = nn::add(logits, Tensor::constant(std::move(mask)));
    }
    Tensor alpha = nn::softmax_rows(logits);
    if (opt.node_mask.defined()) alpha = nn::mul(alpha, nn::pair_prod(opt.node_mask, opt.node_mask, n));
    if (opt.train) alpha = nn::dropout(alpha, cfg.attn_dropout, true, *opt.rng);
    return {H, alpha};
}

void check_options(const ForwardOptions& opt) {
    if (opt.train && opt.rng == nullptr) throw Error(ErrorKind::Argument, "training forward needs an rng");
}

}  // namespace

GatModel make_model(const GatConfig& cfg, std::size_t n_assets, std::size_t node_dim, std::size_t edge_dim) {
    cfg.validate();
    if (n_assets == 0 || node_dim == 0) throw Error(ErrorKind::Shape, "gat: empty graph dimensions");
    GatModel m;
    m.cfg = cfg;
    m.n_assets = n_assets;
    m.node_dim = node_dim;
    m.edge_dim = edge_dim;
    std::mt19937_64 rng(cfg.seed);
    std::size_t in = node_dim;
    for (std::size_t l = 0; l < cfg.hidden.size(); ++l) {
        LayerParams layer;
        layer.in_dim = in;
        layer.out_dim = static_cast<std::size_t>(cfg.hidden[l]);
        layer.concat = l + 1 < cfg.hidden.size();
        const auto mp = layer.out_dim;
        const double q_fan = static_cast<double>(cfg.use_edges ? 3 * mp : 2 * mp);
        for (int k = 0; k < cfg.heads; ++k) {
            HeadParams hp;
            const auto tag = fmt::format("layer{}.head{}.", l, k);
            hp.W = Tensor::param(glorot(mp, in, static_cast<double>(in), static_cast<double>(mp), rng));
            m.params.add(tag + "W", hp.W);
            if (cfg.use_edges) {
                hp.U = Tensor::param(glorot(mp, edge_dim, static_cast<double>(edge_dim), static_cast<double>(mp), rng));
                m.params.add(tag + "U", hp.U);
            }
            hp.qa = Tensor::param(glorot(1, mp, q_fan, 1.0, rng));
            hp.qb = Tensor::param(glorot(1, mp, q_fan, 1.0, rng));
            m.params.add(tag + "qa", hp.qa);
            m.params.add(tag + "qb", hp.qb);
            if (cfg.use_edges) {
                hp.qe = Tensor::param(glorot(1, mp, q_fan, 1.0, rng));
                m.params.add(tag + "qe", hp.qe);
            }
            layer.heads.push_back(hp);
        }
        in = layer.concat ? mp * static_cast<std::size_t>(cfg.heads) : mp;
        m.layers.push_back(std::move(layer));
    }
    const auto od = static_cast<std::size_t>(cfg.out_dim);
    m.O = Tensor::param(glorot(od, in, static_cast<double>(in), static_cast<double>(od), rng));
    m.u = Tensor::param(Mat(1, od));
    m.params.add("O", m.O);
    m.params.add("u", m.u);
    return m;
}

Batch make_batch(const std::vector<const graphs::GraphSnapshot*>& snaps) {
    if (snaps.empty()) throw Error(ErrorKind::Argument, "empty batch");
    const auto& first = *snaps[0];
    Batch b;
    b.graphs = snaps.size();
    b.n = first.node.rows;
    Mat x(b.graphs * b.n, first.node.cols);
    Mat e(b.graphs * first.edge.rows, first.edge.cols);
    Mat y(b.graphs * b.n, first.target.cols);
    for (std::size_t s = 0; s < snaps.size(); ++s) {
        const auto& g = *snaps[s];
        if (!g.node.same_shape(first.node) || !g.edge.same_shape(first.edge) || !g.target.same_shape(first.target)) {
            throw Error(ErrorKind::Shape, fmt::format("snapshot b={} differs in shape from b={}", g.b, first.b));
        }
        std::copy(g.node.data.begin(), g.node.data.end(), x.data.begin() + static_cast<std::ptrdiff_t>(s * g.node.size()));
        std::copy(g.edge.data.begin(), g.edge.data.end(), e.data.begin() + static_cast<std::ptrdiff_t>(s * g.edge.size()));
        std::copy(g.target.data.begin(), g.target.data.end(),
                  y.data.begin() + static_cast<std::ptrdiff_t>(s * g.target.size()));
    }
    b.x = Tensor::constant(std::move(x));
    b.e = Tensor::constant(std::move(e));
    b.y = Tensor::constant(std::move(y));
    return b;
}

Batch make_batch(const graphs::GraphSnapshot& s) { return make_batch(std::vector<const graphs::GraphSnapshot*>{&s}); }

std::vector<Tensor> attention_matrix(const LayerParams& layer, const GatConfig& cfg, const Tensor& h, const Tensor& e,
                                     std::size_t n, const ForwardOptions& opt) {
    check_options(opt);
    std::vector<Tensor> out;
    for (const auto& hp : layer.heads) out.push_back(head_attention(hp, cfg, h, e, n, opt).alpha);
    return out;
}

namespace {

Tensor layer_forward_impl(const LayerParams& layer, const GatConfig& cfg, const Tensor& h, const Tensor& e,
                          std::size_t n, const ForwardOptions& opt, std::vector<Mat>* attn) {
    if (h.cols() != layer.in_dim) {
        throw Error(ErrorKind::Shape, fmt::format("layer expects {} input features, got {}", layer.in_dim, h.cols()));
    }
    std::vector<Tensor> parts;
    for (const auto& hp : layer.heads) {
        auto ho = head_attention(hp, cfg, h, e, n, opt);
        if (attn) attn->push_back(ho.alpha.value());
        parts.push_back(nn::block_matmul(ho.alpha, ho.H, n));
    }
    if (layer.concat) {
        for (auto& p : parts) p = activate(p, cfg.activation);
        return parts.size() == 1 ? parts[0] : nn::concat_cols(parts);
    }
    Tensor acc = parts[0];
    for (std::size_t k = 1; k < parts.size(); ++k) acc = nn::add(acc, parts[k]);
    if (parts.size() > 1) acc = nn::scale(acc, 1.0 / static_cast<double>(parts.size()));
    return activate(acc, cfg.activation);
}

}  // namespace

Tensor layer_forward(const LayerParams& layer, const GatConfig& cfg, const Tensor& h, const Tensor& e, std::size_t n,
                     const ForwardOptions& opt) {
    check_options(opt);
    return layer_forward_impl(layer, cfg, h, e, n, opt, nullptr);
}

Tensor forward(const GatModel& model, const Batch& batch, const ForwardOptions& opt) {
    check_options(opt);
    if (batch.n != model.n_assets || batch.x.cols() != model.node_dim ||
        (model.cfg.use_edges && batch.n >= 2 && batch.e.cols() != model.edge_dim)) {
        throw Error(ErrorKind::Shape,
                    fmt::format("snapshot dims (N={}, M={}, E={}) do not match model (N={}, M={}, E={})", batch.n,
                                batch.x.cols(), batch.e.cols(), model.n_assets, model.node_dim, model.edge_dim));
    }
    if (opt.attention) opt.attention->assign(model.layers.size(), {});
    Tensor h = batch.x;
    if (opt.node_mask.defined()) h = nn::mul_col(h, opt.node_mask);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (opt.train) h = nn::dropout(h, model.cfg.dropout, true, *opt.rng);
        h = layer_forward_impl(model.layers[l], model.cfg, h, batch.e, batch.n, opt,
                               opt.attention ? &(*opt.attention)[l] : nullptr);
    }
    return nn::add_row(nn::matmul_nt(h, model.O), model.u);
}

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

template <typename Fn>
void for_batches(const std::vector<graphs::GraphSnapshot>& snaps, const std::vector<std::size_t>& order, int batch_size,
                 Fn&& fn) {
    std::vector<const graphs::GraphSnapshot*> chunk;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        chunk.clear();
        const auto end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        for (auto k = start; k < end; ++k) chunk.push_back(&snaps[order[k]]);
        fn(chunk, start / static_cast<std::size_t>(batch_size));
    }
}

std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = k;
    return v;
}

}  // namespace

double evaluate_mse(const GatModel& model, const std::vector<graphs::GraphSnapshot>& snaps, int batch_size) {
    if (snaps.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sse = 0.0;
    double count = 0.0;
    for_batches(snaps, iota(snaps.size()), batch_size, [&](const auto& chunk, std::size_t) {
        const auto batch = make_batch(chunk);
        const auto pred = forward(model, batch);
        for (std::size_t k = 0; k < pred.value().size(); ++k) {
            const double d = pred.value().data[k] - batch.y.value().data[k];
            sse += d * d;
        }
        count += static_cast<double>(pred.value().size());
    });
    return sse / count;
}

std::vector<Mat> predict(const GatModel& model, const std::vector<graphs::GraphSnapshot>& snaps, int batch_size) {
    std::vector<Mat> out;
    out.reserve(snaps.size());
    for_batches(snaps, iota(snaps.size()), batch_size, [&](const auto& chunk, std::size_t) {
        const auto pred = forward(model, make_batch(chunk)).value();
        const auto n = model.n_assets;
        for (std::size_t s = 0; s < chunk.size(); ++s) {
            Mat m(n, pred.cols);
            std::copy(pred.data.begin() + static_cast<std::ptrdiff_t>(s * n * pred.cols),
                      pred.data.begin() + static_cast<std::ptrdiff_t>((s + 1) * n * pred.cols), m.data.begin());
            out.push_back(std::move(m));
        }
    });
    return out;
}

std::vector<EpochLoss> train(GatModel& model, const std::vector<graphs::GraphSnapshot>& train_set,
                             const std::vector<graphs::GraphSnapshot>& val_set) {
    const auto& cfg = model.cfg;
    if (train_set.empty()) throw Error(ErrorKind::Argument, "gat train: empty training set");
    auto opt = nn::make_optimizer(cfg.optim);
    std::mt19937_64 rng(mix(cfg.seed ^ 0x7261696eULL));
    auto order = iota(train_set.size());
    std::vector<EpochLoss> history;
    double best = std::numeric_limits<double>::infinity();
    std::vector<Mat> best_params;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for_batches(train_set, order, cfg.batch_size, [&](const auto& chunk, std::size_t index) {
            const auto batch = make_batch(chunk);
            model.params.zero_grad();
            ForwardOptions fo;
            fo.train = true;
            fo.rng = &rng;
            auto loss = nn::mse(forward(model, batch, fo), batch.y);
            if (!std::isfinite(loss.item())) {
                throw Error(ErrorKind::Numerical,
                            fmt::format("gat train: non-finite loss {} (lr {}, epoch {}, batch {})", loss.item(),
                                        cfg.optim.lr, epoch, index));
            }
            loss.backward();
            opt->step(model.params);
            total += loss.item() * static_cast<double>(chunk.size());
        });
        EpochLoss rec{epoch, total / static_cast<double>(train_set.size()), evaluate_mse(model, val_set, cfg.batch_size)};
        history.push_back(rec);
        if (cfg.keep_best && !val_set.empty() && rec.val < best) {
            best = rec.val;
            best_params.clear();
            for (const auto& t : model.params.tensors) best_params.push_back(t.value());
        }
    }
    if (cfg.keep_best && !best_params.empty()) {
        for (std::size_t k = 0; k < best_params.size(); ++k) model.params.tensors[k].value() = best_params[k];
    }
    return history;
}

void save_model(const std::filesystem::path& path, const GatModel& model, const nlohmann::json& extra) {
    nlohmann::json cfg = {{"model", "spotv2net"},
                          {"gat", to_json(model.cfg)},
                          {"n_assets", model.n_assets},
                          {"node_dim", model.node_dim},
                          {"edge_dim", model.edge_dim}};
    if (extra.is_object()) cfg.update(extra);
    nn::save_checkpoint(path, model.params, cfg);
}

GatModel load_model(const std::filesystem::path& path) {
    const auto ck = nn::load_checkpoint(path);
    if (ck.config.value("model", "") != "spotv2net") {
        throw Error(ErrorKind::Format, fmt::format("{} is not a SpotV2Net checkpoint", path.string()));
    }
    auto model = make_model(gat_config_from_json(ck.config.at("gat")), ck.config.at("n_assets").get<std::size_t>(),
                            ck.config.at("node_dim").get<std::size_t>(), ck.config.at("edge_dim").get<std::size_t>());
    nn::restore(model.params, ck);
    return model;
}

}  // namespace spotv2::gat
