#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "../support/toy.hpp"
#include "spotv2/error.hpp"

using namespace spotv2;
using namespace spotv2::gat;
using spotv2::testing::random_mat;
using spotv2::testing::random_snapshot;
using spotv2::testing::toy_gat_config;

namespace {

double leaky(double x, double c) { return x > 0 ? x : c * x; }

}  // namespace

TEST_CASE("configuration defaults") {
    auto s = GatConfig::single_step();
    CHECK(s.hidden == std::vector<int>{400, 200});
    CHECK(s.heads == 4);
    CHECK(s.slope == 0.1);
    CHECK(s.out_dim == 1);
    CHECK(GatConfig::multi_step().out_dim == 14);
    auto j = gat_config_from_json({{"heads", 2}, {"optim", {{"lr", 0.5}}}});
    CHECK(j.heads == 2);
    CHECK(j.optim.lr == 0.5);
    CHECK(j.optim.weight_decay == s.optim.weight_decay);
    CHECK_THROWS_AS(gat_config_from_json({{"activation", "swish"}}), Error);
    CHECK_THROWS_AS(gat_config_from_json({{"hidden", std::vector<int>{}}}), Error);
}

TEST_CASE("attention rows sum to one") {
    std::mt19937_64 rng(1);
    for (bool edges : {true, false}) {
        auto cfg = toy_gat_config(edges, 3);
        auto model = make_model(cfg, 5, graphs::node_feature_len(5, 1), graphs::edge_feature_len(1));
        auto s1 = random_snapshot(5, 1, 1, rng), s2 = random_snapshot(5, 1, 1, rng);
        auto batch = make_batch({&s1, &s2});
        std::vector<std::vector<Mat>> attn;
        ForwardOptions fo;
        fo.attention = &attn;
        forward(model, batch, fo);
        REQUIRE(attn.size() == 2);
        for (const auto& layer : attn) {
            REQUIRE(layer.size() == 2);
            for (const auto& a : layer) {
                CHECK(a.rows == 10);
                CHECK(a.cols == 5);
                for (std::size_t r = 0; r < a.rows; ++r) {
                    double sum = 0.0;
                    for (std::size_t c = 0; c < a.cols; ++c) sum += a(r, c);
                    CHECK(std::abs(sum - 1.0) <= 1e-12);
                }
            }
        }
    }
}

TEST_CASE("identical inputs give uniform attention") {
    std::mt19937_64 rng(2);
    auto cfg = toy_gat_config(true, 4);
    auto model = make_model(cfg, 4, graphs::node_feature_len(4, 1), graphs::edge_feature_len(1));
    auto s = random_snapshot(4, 1, 1, rng);
    for (std::size_t i = 1; i < 4; ++i)
        for (std::size_t c = 0; c < s.node.cols; ++c) s.node(i, c) = s.node(0, c);
    for (std::size_t k = 1; k < s.edge.rows; ++k)
        for (std::size_t c = 0; c < s.edge.cols; ++c) s.edge(k, c) = s.edge(0, c);
    std::vector<std::vector<Mat>> attn;
    ForwardOptions fo;
    fo.attention = &attn;
    forward(model, make_batch(s), fo);
    for (const auto& layer : attn)
        for (const auto& a : layer)
            for (double v : a.data) CHECK(v == 0.25);
}

TEST_CASE("zero edge weights reproduce the edge-free model bitwise") {
    std::mt19937_64 rng(3);
    const std::size_t n = 4;
    auto with = make_model(toy_gat_config(true, 5), n, graphs::node_feature_len(n, 1), graphs::edge_feature_len(1));
    auto without = make_model(toy_gat_config(false, 6), n, graphs::node_feature_len(n, 1), graphs::edge_feature_len(1));
    for (std::size_t l = 0; l < with.layers.size(); ++l)
        for (std::size_t k = 0; k < with.layers[l].heads.size(); ++k) {
            auto& a = with.layers[l].heads[k];
            auto& b = without.layers[l].heads[k];
            for (auto& v : a.U.value().data) v = 0.0;
            for (auto& v : a.qe.value().data) v = 0.0;
            b.W.value() = a.W.value();
            b.qa.value() = a.qa.value();
            b.qb.value() = a.qb.value();
        }
    without.O.value() = with.O.value();
    without.u.value() = Mat(1, 1, 0.7);
    with.u.value() = Mat(1, 1, 0.7);
    auto s = random_snapshot(n, 1, 1, rng);
    auto p1 = forward(with, make_batch(s)).value();
    auto p2 = forward(without, make_batch(s)).value();
    CHECK(p1.data == p2.data);
}

TEST_CASE("three-node attention matches a hand softmax") {
    GatConfig cfg;
    cfg.hidden = {1};
    cfg.heads = 1;
    cfg.use_edges = false;
    cfg.slope = 0.1;
    LayerParams layer;
    layer.in_dim = 1;
    layer.out_dim = 1;
    layer.concat = false;
    HeadParams hp;
    const double w = 1.5, qa = 0.8, qb = -0.6;
    hp.W = nn::Tensor::constant(Mat(1, 1, w));
    hp.qa = nn::Tensor::constant(Mat(1, 1, qa));
    hp.qb = nn::Tensor::constant(Mat(1, 1, qb));
    layer.heads.push_back(hp);
    Mat x(3, 1);
    x(0, 0) = 0.5;
    x(1, 0) = -1.0;
    x(2, 0) = 2.0;
    auto alpha = attention_matrix(layer, cfg, nn::Tensor::constant(x), nn::Tensor::constant(Mat(0, 0)), 3)[0].value();
    for (std::size_t i = 0; i < 3; ++i) {
        double e[3], z = 0.0;
        for (std::size_t j = 0; j < 3; ++j) z += (e[j] = std::exp(leaky(qa * w * x(i, 0) + qb * w * x(j, 0), 0.1)));
        for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(alpha(i, j) - e[j] / z) < 1e-12);
    }
}

TEST_CASE("uniform attention averages the projected inputs") {
    std::mt19937_64 rng(4);
    GatConfig cfg;
    cfg.hidden = {3};
    cfg.heads = 1;
    cfg.use_edges = false;
    cfg.activation = "identity";
    LayerParams layer;
    layer.in_dim = 2;
    layer.out_dim = 3;
    layer.concat = false;
    HeadParams hp;
    hp.W = nn::Tensor::constant(random_mat(3, 2, rng));
    hp.qa = nn::Tensor::constant(Mat(1, 3));
    hp.qb = nn::Tensor::constant(Mat(1, 3));
    layer.heads.push_back(hp);
    auto x = random_mat(4, 2, rng);
    auto out = layer_forward(layer, cfg, nn::Tensor::constant(x), {}, 4).value();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t r = 0; r < 3; ++r) {
            double expect = 0.0;
            for (std::size_t j = 0; j < 4; ++j)
                for (std::size_t c = 0; c < 2; ++c) expect += hp.W.value()(r, c) * x(j, c) / 4.0;
            CHECK(out(i, r) == doctest::Approx(expect).epsilon(1e-13));
        }
}

TEST_CASE("head concatenation and averaging") {
    std::mt19937_64 rng(5);
    auto cfg = GatConfig::single_step();
    auto model = make_model(cfg, 3, graphs::node_feature_len(3, 0), graphs::edge_feature_len(0));
    auto s = random_snapshot(3, 0, 1, rng);
    auto b = make_batch(s);
    auto h = layer_forward(model.layers[0], cfg, b.x, b.e, 3);
    CHECK(h.cols() == 1600);
    CHECK(model.layers[0].concat);
    CHECK_FALSE(model.layers[1].concat);

    // Averaging identical heads equals one head.
    auto layer = model.layers[1];
    for (auto& hp : layer.heads) hp = layer.heads[0];
    auto avg = layer_forward(layer, cfg, h, b.e, 3).value();
    auto one = layer;
    one.heads.resize(1);
    auto single = layer_forward(one, cfg, h, b.e, 3).value();
    for (std::size_t k = 0; k < avg.size(); ++k) CHECK(avg.data[k] == doctest::Approx(single.data[k]).epsilon(1e-13));
}

TEST_CASE("zero readout returns the bias") {
    std::mt19937_64 rng(6);
    auto cfg = toy_gat_config(true, 7);
    cfg.out_dim = 14;
    auto model = make_model(cfg, 4, graphs::node_feature_len(4, 1), graphs::edge_feature_len(1));
    for (auto& v : model.O.value().data) v = 0.0;
    for (std::size_t h = 0; h < 14; ++h) model.u.value()(0, h) = 0.01 * h;
    auto s = random_snapshot(4, 1, 14, rng);
    auto p = forward(model, make_batch(s)).value();
    REQUIRE(p.rows == 4);
    REQUIRE(p.cols == 14);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t h = 0; h < 14; ++h) CHECK(p(i, h) == 0.01 * h);
}

TEST_CASE("gradients match finite differences") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        CHECK(spotv2::testing::gat_fd_error(rng, true) < 1e-4);
        CHECK(spotv2::testing::gat_fd_error(rng, false) < 1e-4);
    }
}

TEST_CASE("unit node mask and full adjacency leave the forward unchanged") {
    std::mt19937_64 rng(8);
    auto model = make_model(toy_gat_config(true, 9), 4, graphs::node_feature_len(4, 1), graphs::edge_feature_len(1));
    auto s = random_snapshot(4, 1, 1, rng);
    auto b = make_batch(s);
    auto base = forward(model, b).value();
    ForwardOptions fo;
    fo.node_mask = nn::Tensor::constant(Mat(4, 1, 1.0));
    Mat full(4, 4, 1.0);
    fo.adjacency = &full;
    CHECK(forward(model, b, fo).value().data == base.data);

    Mat eye(4, 4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
    std::vector<std::vector<Mat>> attn;
    ForwardOptions self;
    self.adjacency = &eye;
    self.attention = &attn;
    forward(model, b, self);
    for (const auto& layer : attn)
        for (const auto& a : layer)
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 4; ++j) CHECK(a(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("shape mismatches are rejected") {
    std::mt19937_64 rng(9);
    auto model = make_model(toy_gat_config(true, 1), 4, graphs::node_feature_len(4, 1), graphs::edge_feature_len(1));
    auto wrong = random_snapshot(5, 1, 1, rng);
    CHECK_THROWS_AS(forward(model, make_batch(wrong)), Error);
    ForwardOptions fo;
    fo.train = true;
    auto s = random_snapshot(4, 1, 1, rng);
    CHECK_THROWS_AS(forward(model, make_batch(s), fo), Error);
}

namespace {

std::vector<graphs::GraphSnapshot> learnable_set(std::size_t count, std::mt19937_64& rng) {
    std::vector<graphs::GraphSnapshot> out;
    for (std::size_t k = 0; k < count; ++k) {
        auto s = random_snapshot(4, 1, 1, rng, k);
        for (std::size_t i = 0; i < 4; ++i) s.target(i, 0) = 0.5 * s.node(i, 0) - 0.2 * s.node((i + 1) % 4, 1);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("training reduces the loss and is reproducible") {
    std::mt19937_64 rng(10);
    auto data = learnable_set(20, rng);
    for (bool edges : {true, false}) {
        auto cfg = toy_gat_config(edges, 11);
        cfg.hidden = {16, 8};
        cfg.epochs = 150;
        cfg.batch_size = 5;
        cfg.optim.lr = 5e-3;
        auto plain = make_model(cfg, 4, graphs::node_feature_len(4, 1), graphs::edge_feature_len(1));
        const double before = evaluate_mse(plain, data);
        auto h = train(plain, data, {});
        REQUIRE(h.size() == 150);
        CHECK(std::isnan(h.back().val));
        CHECK(evaluate_mse(plain, data) < 0.3 * before);

        cfg.dropout = 0.1;
        cfg.attn_dropout = 0.1;
        auto m1 = make_model(cfg, 4, graphs::node_feature_len(4, 1), graphs::edge_feature_len(1));
        auto m2 = make_model(cfg, 4, graphs::node_feature_len(4, 1), graphs::edge_feature_len(1));
        auto h1 = train(m1, data, {data.begin(), data.begin() + 4});
        auto h2 = train(m2, data, {data.begin(), data.begin() + 4});
        for (std::size_t e = 0; e < h1.size(); ++e) {
            CHECK(h1[e].train == h2[e].train);
            CHECK(h1[e].val == h2[e].val);
        }
    }
}

TEST_CASE("checkpoint round trip preserves predictions") {
    std::mt19937_64 rng(12);
    auto model = make_model(toy_gat_config(true, 13), 4, graphs::node_feature_len(4, 1), graphs::edge_feature_len(1));
    std::vector<graphs::GraphSnapshot> snaps{random_snapshot(4, 1, 1, rng), random_snapshot(4, 1, 1, rng)};
    auto dir = std::filesystem::temp_directory_path() / "spotv2_gat_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    save_model(dir / "m.json", model, {{"name", "toy"}});
    auto back = load_model(dir / "m.json");
    auto a = predict(model, snaps), b = predict(back, snaps);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].data == b[k].data);
    std::filesystem::remove_all(dir);
}
