#include "doctest.h"

#include <cmath>

#include "../support/toy.hpp"
#include "spotv2/error.hpp"
#include "spotv2/explain.hpp"

using namespace spotv2;
using namespace spotv2::explain;
using spotv2::testing::random_snapshot;

namespace {

gat::GatModel toy_model(std::size_t n, std::uint64_t seed) {
    auto cfg = spotv2::testing::toy_gat_config(true, seed);
    auto m = gat::make_model(cfg, n, graphs::node_feature_len(n, 1), graphs::edge_feature_len(1));
    for (auto& v : m.u.value().data) v = 0.5;
    return m;
}

}  // namespace

TEST_CASE("frozen copies carry no trainable parameters") {
    auto m = toy_model(4, 1);
    auto f = freeze(m);
    CHECK(f.params.tensors.empty());
    CHECK_FALSE(f.O.requires_grad());
    CHECK(f.O.value().data == m.O.value().data);
    std::mt19937_64 rng(1);
    auto s = random_snapshot(4, 1, 1, rng);
    CHECK(gat::forward(f, gat::make_batch(s)).value().data == gat::forward(m, gat::make_batch(s)).value().data);
}

TEST_CASE("huge size penalty drives every neighbour mask to zero") {
    std::mt19937_64 rng(2);
    auto m = freeze(toy_model(5, 2));
    auto s = random_snapshot(5, 1, 1, rng);
    ExplainConfig cfg;
    cfg.lambda1 = 1e3;
    cfg.lr = 0.1;
    auto r = explain_node(m, s, 2, 3, cfg);
    REQUIRE(r.mask.size() == 5);
    CHECK(r.mask[2] == 1.0);
    for (std::size_t j = 0; j < 5; ++j)
        if (j != 2) CHECK(r.mask[j] < 0.01);
    CHECK(r.selected.size() == 3);
    CHECK(r.selected[0] == 2);
    CHECK(r.trace.size() == 200);
}

TEST_CASE("a model that ignores neighbours gets no neighbour mass") {
    std::mt19937_64 rng(3);
    const std::size_t n = 5;
    auto cfg = spotv2::testing::toy_gat_config(true, 4);
    cfg.hidden = {4};
    cfg.heads = 1;
    auto model = gat::make_model(cfg, n, graphs::node_feature_len(n, 1), graphs::edge_feature_len(1));
    // Own-feature block only: vol lags of the node itself.
    for (auto& v : model.layers[0].heads[0].W.value().data) v = 0.0;
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 2; ++c) model.layers[0].heads[0].W.value()(r, c) = 0.4 * (1.0 + r) * (c ? -1 : 1);
    Mat eye(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eye(i, i) = 1.0;
    auto frozen = freeze(model);
    ExplainConfig ec;
    ec.adjacency = &eye;
    std::vector<graphs::GraphSnapshot> snaps;
    for (int k = 0; k < 12; ++k) snaps.push_back(random_snapshot(n, 1, 1, rng, k));
    auto results = explain_all(frozen, snaps, 3, ec, 2);
    REQUIRE(results.size() == 12 * n);
    // The fidelity term is flat in every neighbour mask; only an occasional
    // mask initialised on the high side drifts up under the entropy term.
    Mat above(n, n, 0.0);
    for (const auto& r : results)
        for (std::size_t j = 0; j < n; ++j)
            if (j != r.target && r.mask[j] > 0.5) above(j, r.target) += 1.0 / 12.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) CHECK(above(j, i) < 0.5);
    double total = 0.0;
    for (double v : above.data) total += v;
    CHECK(total / (n * (n - 1)) < 0.1);
}

TEST_CASE("explanations are deterministic and worker-independent") {
    std::mt19937_64 rng(5);
    auto m = toy_model(4, 6);
    std::vector<graphs::GraphSnapshot> snaps{random_snapshot(4, 1, 1, rng, 0), random_snapshot(4, 1, 1, rng, 1)};
    ExplainConfig cfg;
    cfg.iterations = 50;
    auto a = explain_all(m, snaps, 2, cfg, 1);
    auto b = explain_all(m, snaps, 2, cfg, 3);
    REQUIRE(a.size() == 8);
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].mask == b[k].mask);
        CHECK(a[k].selected == b[k].selected);
        CHECK(a[k].target == k % 4);
        CHECK(a[k].b == snaps[k / 4].b);
    }
}

TEST_CASE("heatmap counting") {
    ExplainResult r;
    r.target = 0;
    r.selected = {0, 2};
    auto h = frequency_heatmap({r}, 3);
    CHECK(h(2, 0) == 100.0);
    CHECK(h(0, 0) == 100.0);
    CHECK(h(1, 0) == 0.0);
    CHECK(h(1, 1) == 0.0);

    std::mt19937_64 rng(7);
    auto m = toy_model(4, 8);
    std::vector<graphs::GraphSnapshot> snaps;
    for (int k = 0; k < 3; ++k) snaps.push_back(random_snapshot(4, 1, 1, rng, k));
    ExplainConfig cfg;
    cfg.iterations = 30;
    auto heat = frequency_heatmap(explain_all(m, snaps, 3, cfg), 4);
    for (std::size_t i = 0; i < 4; ++i) {
        double col = 0.0;
        for (std::size_t j = 0; j < 4; ++j) col += heat(j, i);
        CHECK(col == 300.0);
        CHECK(heat(i, i) == 100.0);
    }
    auto csv = heatmap_to_csv(heat, {"A", "B", "C", "D"});
    CHECK(csv.find("A") != std::string::npos);
}

TEST_CASE("config validation and JSON") {
    ExplainConfig c;
    c.iterations = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    auto j = explain_config_from_json({{"lambda1", 0.2}, {"iterations", 10}});
    CHECK(j.lambda1 == 0.2);
    CHECK(j.iterations == 10);
    CHECK(explain_config_from_json(to_json(j)).lambda1 == 0.2);
    std::mt19937_64 rng(9);
    auto m = freeze(toy_model(4, 10));
    auto s = random_snapshot(4, 1, 1, rng);
    CHECK_THROWS_AS(explain_node(m, s, 4, 2), Error);
    CHECK_THROWS_AS(explain_node(m, s, 0, 5), Error);
}
