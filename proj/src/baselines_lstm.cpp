#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "spotv2/baselines.hpp"
#include "spotv2/error.hpp"
#include "spotv2/nn/checkpoint.hpp"

namespace spotv2::baselines {

using nn::Tensor;

LstmConfig LstmConfig::single_step() { return LstmConfig{}; }

LstmConfig LstmConfig::multi_step() {
    LstmConfig c;
    c.hidden = {400, 400};
    c.dropout = 0.3;
    c.out_dim = kPointsPerDay;
    return c;
}

void LstmConfig::validate() const {
    if (hidden.empty()) throw Error(ErrorKind::Config, "lstm: at least one hidden layer is required");
    for (int h : hidden) {
        if (h < 1) throw Error(ErrorKind::Config, "lstm: hidden sizes must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorKind::Config, "lstm: dropout must lie in [0, 1)");
    if (out_dim < 1 || batch_size < 1 || epochs < 0) {
        throw Error(ErrorKind::Config, "lstm: out_dim and batch_size must be positive, epochs non-negative");
    }
    if (!(optim.lr > 0.0)) throw Error(ErrorKind::Config, "lstm: learning rate must be positive");
}

nlohmann::json to_json(const LstmConfig& c) {
    return {{"hidden", c.hidden},         {"dropout", c.dropout}, {"out_dim", c.out_dim},
            {"optim", nn::to_json(c.optim)}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
            {"seed", c.seed}};
}

LstmConfig lstm_config_from_json(const nlohmann::json& j, const LstmConfig& base) {
    LstmConfig c = base;
    c.hidden = j.value("hidden", c.hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.out_dim = j.value("out_dim", c.out_dim);
    if (j.contains("optim")) {
        auto merged = nn::to_json(c.optim);
        merged.update(j.at("optim"));
        c.optim = nn::optim_from_json(merged);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

namespace {

Mat glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat m(rows, cols);
    for (auto& v : m.data) v = dist(rng);
    return m;
}

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Tensor gate(const Tensor& x, const Tensor& h, const Tensor& W, const Tensor& U, const Tensor& b) {
    return nn::add_row(nn::add(nn::matmul_nt(x, W), nn::matmul_nt(h, U)), b);
}

Mat stack_rows(const std::vector<Mat>& seqs, std::size_t t) {
    const auto d = seqs.front().cols;
    Mat x(seqs.size(), d);
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        std::copy_n(seqs[s].data.begin() + static_cast<std::ptrdiff_t>(t * d), d,
                    x.data.begin() + static_cast<std::ptrdiff_t>(s * d));
    }
    return x;
}

Mat stack_targets(const std::vector<const graphs::GraphSnapshot*>& snaps) {
    const auto n = snaps.front()->target.rows;
    const auto w = snaps.front()->target.cols;
    Mat y(snaps.size() * n, w);
    for (std::size_t s = 0; s < snaps.size(); ++s) {
        std::copy(snaps[s]->target.data.begin(), snaps[s]->target.data.end(),
                  y.data.begin() + static_cast<std::ptrdiff_t>(s * n * w));
    }
    return y;
}

}  // namespace

LstmModel make_lstm(const LstmConfig& cfg, std::size_t n_assets, std::size_t input_dim, std::size_t steps) {
    cfg.validate();
    if (n_assets == 0 || input_dim == 0 || steps == 0) {
        throw Error(ErrorKind::Argument, "lstm: assets, input width and sequence length must be positive");
    }
    LstmModel m;
    m.cfg = cfg;
    m.n_assets = n_assets;
    m.input_dim = input_dim;
    m.steps = steps;
    std::mt19937_64 rng(mix(cfg.seed));
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < cfg.hidden.size(); ++l) {
        const auto h = static_cast<std::size_t>(cfg.hidden[l]);
        LstmLayer L;
        const std::array<std::pair<const char*, Tensor*>, 4> ws{
            {{"Wf", &L.Wf}, {"Wi", &L.Wi}, {"Wo", &L.Wo}, {"Wc", &L.Wc}}};
        const std::array<std::pair<const char*, Tensor*>, 4> us{
            {{"Uf", &L.Uf}, {"Ui", &L.Ui}, {"Uo", &L.Uo}, {"Uc", &L.Uc}}};
        const std::array<std::pair<const char*, Tensor*>, 4> bs{
            {{"bf", &L.bf}, {"bi", &L.bi}, {"bo", &L.bo}, {"bc", &L.bc}}};
        for (auto& [name, t] : ws) *t = Tensor::param(glorot(h, in, rng));
        for (auto& [name, t] : us) *t = Tensor::param(glorot(h, h, rng));
        for (auto& [name, t] : bs) *t = Tensor::param(Mat(1, h));
        for (const auto* group : {&ws, &us, &bs}) {
            for (auto& [name, t] : *group) m.params.add(fmt::format("layer{}.{}", l, name), *t);
        }
        m.layers.push_back(std::move(L));
        in = h;
    }
    const auto od = n_assets * static_cast<std::size_t>(cfg.out_dim);
    m.O = Tensor::param(glorot(od, in, rng));
    m.u = Tensor::param(Mat(1, od));
    m.params.add("O", m.O);
    m.params.add("u", m.u);
    return m;
}

Mat lstm_sequence(const graphs::GraphSnapshot& s, int lags) {
    const auto na = s.node.rows;
    const auto width = static_cast<std::size_t>(lags + 1);
    if (lags < 0 || s.node.cols != graphs::node_feature_len(na, lags)) {
        throw Error(ErrorKind::Shape,
                    fmt::format("lstm_sequence: node features have {} columns, expected {} for L={}", s.node.cols,
                                graphs::node_feature_len(na, lags), lags));
    }
    const auto np = pair_count(na);
    Mat seq(width, na + np);
    for (std::size_t t = 0; t < width; ++t) {
        const auto l = width - 1 - t;
        for (std::size_t i = 0; i < na; ++i) seq(t, i) = s.node(i, l);
        std::size_t k = 0;
        for (std::size_t i = 0; i < na; ++i) {
            for (std::size_t j = i + 1; j < na; ++j, ++k) {
                seq(t, na + k) = s.node(i, width + l * (na - 1) + (j - 1));
            }
        }
    }
    return seq;
}

Tensor lstm_forward(const LstmModel& model, const std::vector<Mat>& sequences, bool train, std::mt19937_64* rng,
                    LstmGates* gates) {
    if (sequences.empty()) throw Error(ErrorKind::Argument, "lstm_forward: empty batch");
    for (const auto& s : sequences) {
        if (s.rows != model.steps || s.cols != model.input_dim) {
            throw Error(ErrorKind::Shape, fmt::format("lstm_forward: sequence is {}x{}, model expects {}x{}", s.rows,
                                                      s.cols, model.steps, model.input_dim));
        }
    }
    if (train && model.cfg.dropout > 0.0 && rng == nullptr) {
        throw Error(ErrorKind::Argument, "lstm_forward: training dropout needs an rng");
    }
    std::mt19937_64 dummy;
    auto& r = rng ? *rng : dummy;
    const auto batch = sequences.size();
    std::vector<Tensor> xs;
    for (std::size_t t = 0; t < model.steps; ++t) xs.push_back(Tensor::constant(stack_rows(sequences, t)));
    if (gates) *gates = {};
    for (const auto& L : model.layers) {
        const auto hdim = L.bf.cols();
        Tensor h = Tensor::constant(Mat(batch, hdim));
        Tensor c = Tensor::constant(Mat(batch, hdim));
        Tensor f, i, o;
        std::vector<Tensor> outs;
        for (const auto& x : xs) {
            f = nn::sigmoid(gate(x, h, L.Wf, L.Uf, L.bf));
            i = nn::sigmoid(gate(x, h, L.Wi, L.Ui, L.bi));
            o = nn::sigmoid(gate(x, h, L.Wo, L.Uo, L.bo));
            const auto g = nn::tanh(gate(x, h, L.Wc, L.Uc, L.bc));
            c = nn::add(nn::mul(f, c), nn::mul(i, g));
            h = nn::mul(o, nn::tanh(c));
            outs.push_back(h);
        }
        if (gates) {
            gates->f.push_back(f.value());
            gates->i.push_back(i.value());
            gates->o.push_back(o.value());
        }
        for (auto& t : outs) t = nn::dropout(t, model.cfg.dropout, train, r);
        xs = std::move(outs);
    }
    const auto head = nn::add_row(nn::matmul_nt(xs.back(), model.O), model.u);
    return nn::reshape(head, batch * model.n_assets, static_cast<std::size_t>(model.cfg.out_dim));
}

namespace {

template <typename Fn>
void for_batches(const std::vector<graphs::GraphSnapshot>& snaps, const std::vector<std::size_t>& order,
                 int batch_size, Fn&& fn) {
    std::vector<const graphs::GraphSnapshot*> chunk;
    const auto bsz = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start < order.size(); start += bsz) {
        chunk.clear();
        for (auto k = start; k < std::min(order.size(), start + bsz); ++k) chunk.push_back(&snaps[order[k]]);
        fn(chunk, start / bsz);
    }
}

std::vector<Mat> sequences_of(const std::vector<const graphs::GraphSnapshot*>& chunk, int lags) {
    std::vector<Mat> seqs;
    seqs.reserve(chunk.size());
    for (const auto* s : chunk) seqs.push_back(lstm_sequence(*s, lags));
    return seqs;
}

double lstm_mse(const LstmModel& model, const std::vector<graphs::GraphSnapshot>& snaps, int lags) {
    if (snaps.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<std::size_t> order(snaps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double sse = 0.0, count = 0.0;
    for_batches(snaps, order, model.cfg.batch_size, [&](const auto& chunk, std::size_t) {
        const auto pred = lstm_forward(model, sequences_of(chunk, lags)).value();
        const auto y = stack_targets(chunk);
        for (std::size_t k = 0; k < pred.size(); ++k) {
            const double d = pred.data[k] - y.data[k];
            sse += d * d;
        }
        count += static_cast<double>(pred.size());
    });
    return sse / count;
}

}  // namespace

std::vector<LstmEpoch> lstm_train(LstmModel& model, const std::vector<graphs::GraphSnapshot>& train_set,
                                  const std::vector<graphs::GraphSnapshot>& val_set, int lags) {
    if (train_set.empty()) throw Error(ErrorKind::Argument, "lstm train: empty training set");
    if (train_set.front().target.cols != static_cast<std::size_t>(model.cfg.out_dim)) {
        throw Error(ErrorKind::Shape, fmt::format("lstm train: targets have {} columns, model outputs {}",
                                                  train_set.front().target.cols, model.cfg.out_dim));
    }
    auto opt = nn::make_optimizer(model.cfg.optim);
    std::mt19937_64 rng(mix(model.cfg.seed ^ 0x6c73746dULL));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<LstmEpoch> history;
    for (int epoch = 1; epoch <= model.cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for_batches(train_set, order, model.cfg.batch_size, [&](const auto& chunk, std::size_t index) {
            model.params.zero_grad();
            const auto pred = lstm_forward(model, sequences_of(chunk, lags), true, &rng);
            auto loss = nn::mse(pred, Tensor::constant(stack_targets(chunk)));
            if (!std::isfinite(loss.item())) {
                throw Error(ErrorKind::Numerical,
                            fmt::format("lstm train: non-finite loss {} (lr {}, epoch {}, batch {})", loss.item(),
                                        model.cfg.optim.lr, epoch, index));
            }
            loss.backward();
            opt->step(model.params);
            total += loss.item() * static_cast<double>(chunk.size());
        });
        history.push_back({epoch, total / static_cast<double>(train_set.size()), lstm_mse(model, val_set, lags)});
    }
    return history;
}

std::vector<Mat> lstm_predict(const LstmModel& model, const std::vector<graphs::GraphSnapshot>& snaps, int lags) {
    std::vector<Mat> out;
    std::vector<std::size_t> order(snaps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for_batches(snaps, order, model.cfg.batch_size, [&](const auto& chunk, std::size_t) {
        const auto pred = lstm_forward(model, sequences_of(chunk, lags)).value();
        const auto n = model.n_assets;
        for (std::size_t s = 0; s < chunk.size(); ++s) {
            Mat m(n, pred.cols);
            std::copy_n(pred.data.begin() + static_cast<std::ptrdiff_t>(s * n * pred.cols), n * pred.cols,
                        m.data.begin());
            out.push_back(std::move(m));
        }
    });
    return out;
}

void save_lstm(const std::filesystem::path& path, const LstmModel& model, const nlohmann::json& extra) {
    nlohmann::json cfg = {{"model", "lstm"},
                          {"lstm", to_json(model.cfg)},
                          {"n_assets", model.n_assets},
                          {"input_dim", model.input_dim},
                          {"steps", model.steps}};
    if (extra.is_object()) cfg.update(extra);
    nn::save_checkpoint(path, model.params, cfg);
}

LstmModel load_lstm(const std::filesystem::path& path) {
    const auto ck = nn::load_checkpoint(path);
    if (ck.config.value("model", "") != "lstm") {
        throw Error(ErrorKind::Format, fmt::format("{} is not an LSTM checkpoint", path.string()));
    }
    auto m = make_lstm(lstm_config_from_json(ck.config.at("lstm")), ck.config.at("n_assets").get<std::size_t>(),
                       ck.config.at("input_dim").get<std::size_t>(), ck.config.at("steps").get<std::size_t>());
    nn::restore(m.params, ck);
    return m;
}

}  // namespace spotv2::baselines
