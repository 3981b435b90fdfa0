#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "../support/toy.hpp"
#include "spotv2/error.hpp"

using namespace spotv2;
using namespace spotv2::baselines;
using spotv2::testing::random_mat;

namespace {

HarSpotCoeffs known_coeffs() {
    HarSpotCoeffs c;
    c.mu = 0.004;
    c.phi = {0.45, 0.25, 0.1};
    c.theta = {0.03, -0.02, 0.01};
    return c;
}

std::vector<std::vector<double>> ramp_history(std::size_t n_assets) {
    std::vector<std::vector<double>> h(n_assets);
    for (std::size_t i = 0; i < n_assets; ++i)
        for (int k = 1; k <= kHarHistory; ++k) h[i].push_back(k + 100.0 * i);
    return h;
}

}  // namespace

TEST_CASE("HAR aggregates by hand") {
    auto f = har_features(ramp_history(3));
    REQUIRE(f.size() == 3);
    CHECK(f[0][0] == 14.0);
    CHECK(f[0][1] == doctest::Approx(10.0).epsilon(1e-15));  // mean of 13..7
    CHECK(f[0][2] == doctest::Approx(3.5).epsilon(1e-15));   // mean of 6..1
    CHECK(f[0][3] == doctest::Approx(114.0 + 214.0));
    CHECK(f[0][4] == doctest::Approx(110.0 + 210.0));
    CHECK(f[2][5] == doctest::Approx(3.5 + 103.5));
    CHECK_THROWS_AS(har_features({{1.0, 2.0}}), Error);
}

TEST_CASE("HAR one-step forecast with zero cross terms") {
    HarSpotCoeffs c;
    c.mu = 0.5;
    c.phi = {0.2, 0.3, 0.1};
    auto fc = harspot_forecast(c, ramp_history(2), 1);
    CHECK(fc[0][0] == doctest::Approx(0.5 + 0.2 * 14 + 0.3 * 10 + 0.1 * 3.5).epsilon(1e-14));
}

TEST_CASE("HAR forecast identities") {
    HarSpotCoeffs rw;
    rw.phi = {1.0, 0.0, 0.0};
    auto h = ramp_history(3);
    auto fc = harspot_forecast(rw, h, 14);
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(fc[i].size() == 14);
        for (double v : fc[i]) CHECK(v == h[i].back());
    }
    HarSpotCoeffs flat;
    flat.mu = 0.07;
    for (const auto& row : harspot_forecast(flat, h, 5))
        for (double v : row) CHECK(v == 0.07);
}

TEST_CASE("HAR recursion feeds forecasts back") {
    auto c = known_coeffs();
    auto h = ramp_history(2);
    for (auto& s : h)
        for (auto& v : s) v *= 1e-3;
    auto fc = harspot_forecast(c, h, 3);
    auto roll = h;
    for (int s = 0; s < 3; ++s) {
        auto f = har_features(roll);
        for (std::size_t i = 0; i < 2; ++i) {
            const double v = har_predict(c, f[i]);
            CHECK(fc[i][s] == v);
            roll[i].push_back(v);
        }
    }
}

TEST_CASE("OLS recovers the generating coefficients") {
    std::mt19937_64 rng(1);
    std::vector<std::size_t> bs;
    auto c = known_coeffs();
    auto panel = spotv2::testing::har_generated_panel(c, 4, 30, 40, 1e-6, rng, bs);
    auto fit = harspot_fit(panel, bs);
    CHECK(std::abs(fit.mu - c.mu) < 1e-2);
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(fit.phi[k] - c.phi[k]) < 1e-2);
        CHECK(std::abs(fit.theta[k] - c.theta[k]) < 1e-2);
    }

    // Residuals are orthogonal to every regressor.
    std::array<double, 7> dot{};
    double scale = 0.0;
    for (auto b : bs) {
        auto f = har_features(panel_history(panel, b));
        for (std::size_t i = 0; i < 4; ++i) {
            const double r = panel.vol[i][b + 1] - har_predict(fit, f[i]);
            dot[0] += r;
            for (int k = 0; k < 6; ++k) dot[k + 1] += r * f[i][k];
            scale += std::abs(panel.vol[i][b + 1]);
        }
    }
    for (double d : dot) CHECK(std::abs(d) < 1e-9 * scale);
}

TEST_CASE("constant panel is singular") {
    auto panel = spotv2::testing::blank_panel(3, 60);
    try {
        harspot_fit(panel);
        FAIL("expected a singular design");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Singular);
        CHECK(std::string(e.what()).find("own_") != std::string::npos);
    }
    CHECK_THROWS_AS(harspot_fit(panel, {5}), Error);  // needs 13 lags
}

TEST_CASE("single-asset HAR has no cross terms") {
    std::mt19937_64 rng(2);
    std::vector<std::size_t> bs;
    auto c = known_coeffs();
    c.theta = {0, 0, 0};
    auto panel = spotv2::testing::har_generated_panel(c, 1, 30, 40, 1e-6, rng, bs);
    auto fit = harspot_fit(panel, bs);
    CHECK(std::abs(fit.phi[0] - c.phi[0]) < 1e-2);
    CHECK(fit.theta == std::array<double, 3>{0, 0, 0});
}

TEST_CASE("HAR JSON round trip") {
    auto c = known_coeffs();
    auto back = har_from_json(to_json(c));
    CHECK(back.mu == c.mu);
    CHECK(back.phi == c.phi);
    CHECK(back.theta == c.theta);
}

TEST_CASE("single stump with unit learning rate predicts the mean") {
    std::mt19937_64 rng(3);
    Mat X = random_mat(50, 3, rng);
    std::vector<double> y;
    double mean = 0.0;
    for (std::size_t r = 0; r < 50; ++r) {
        y.push_back(std::sin(7.0 * X(r, 0)) + 2.0);
        mean += y.back() / 50.0;
    }
    GbtParams p;
    p.n_trees = 1;
    p.max_depth = 0;
    p.learning_rate = 1.0;
    p.lambda = 0.0;
    p.subsample = 1.0;
    auto m = gbt_fit(X, y, p);
    for (double v : gbt_predict(m, X)) CHECK(v == doctest::Approx(mean).epsilon(1e-13));

    p.learning_rate = 0.3;
    auto shrunk = gbt_fit(X, y, p);
    CHECK(gbt_predict(shrunk, X)[0] == doctest::Approx(0.3 * mean).epsilon(1e-13));
}

TEST_CASE("separable step target is fitted") {
    std::mt19937_64 rng(4);
    Mat X = random_mat(200, 2, rng, 0.0, 1.0);
    std::vector<double> y;
    for (std::size_t r = 0; r < 200; ++r) y.push_back(X(r, 1) < 0.5 ? 1.0 : 3.0);
    GbtParams p;
    p.n_trees = 50;
    p.max_depth = 2;
    auto m = gbt_fit(X, y, p);
    double mse = 0.0;
    auto pred = gbt_predict(m, X);
    for (std::size_t r = 0; r < 200; ++r) mse += (pred[r] - y[r]) * (pred[r] - y[r]) / 200.0;
    CHECK(mse < 1e-6);
}

TEST_CASE("training loss never increases tree by tree") {
    std::mt19937_64 rng(5);
    Mat X = random_mat(300, 4, rng);
    std::vector<double> y;
    for (std::size_t r = 0; r < 300; ++r) y.push_back(X(r, 0) * X(r, 1) + std::cos(3 * X(r, 2)));
    GbtParams p;
    p.n_trees = 40;
    p.subsample = 1.0;
    p.max_depth = 3;
    auto full = gbt_fit(X, y, p);
    double prev = 1e300;
    for (std::size_t t = 1; t <= full.trees.size(); ++t) {
        auto part = full;
        part.trees.resize(t);
        auto pred = gbt_predict(part, X);
        double mse = 0.0;
        for (std::size_t r = 0; r < 300; ++r) mse += (pred[r] - y[r]) * (pred[r] - y[r]);
        CHECK(mse <= prev * (1 + 1e-12));
        prev = mse;
    }
}

TEST_CASE("GBT is reproducible and serialises exactly") {
    std::mt19937_64 rng(6);
    Mat X = random_mat(120, 3, rng);
    std::vector<double> y;
    for (std::size_t r = 0; r < 120; ++r) y.push_back(X(r, 2) - X(r, 0) * X(r, 0));
    GbtParams p;
    p.n_trees = 20;
    p.subsample = 0.7;
    p.colsample = 0.67;
    p.seed = 9;
    auto a = gbt_fit(X, y, p);
    p.workers = 3;
    auto b = gbt_fit(X, y, p);
    CHECK(gbt_predict(a, X) == gbt_predict(b, X));
    auto back = gbt_from_json(to_json(a));
    CHECK(gbt_predict(back, X) == gbt_predict(a, X));
    auto pj = gbt_params_from_json(to_json(p));
    CHECK(pj.colsample == p.colsample);
    p.subsample = 0.0;
    CHECK_THROWS_AS(gbt_fit(X, y, p), Error);
}

TEST_CASE("GBT on the HAR design") {
    std::mt19937_64 rng(7);
    std::vector<std::size_t> bs;
    auto panel = spotv2::testing::har_generated_panel(known_coeffs(), 3, 10, 40, 1e-4, rng, bs);
    Mat X;
    std::vector<double> y;
    gbt_design(panel, bs, X, y);
    CHECK(X.rows == bs.size() * 3);
    CHECK(X.cols == 6);
    GbtParams p;
    p.n_trees = 30;
    auto m = gbt_fit(X, y, p);
    auto fc = gbt_forecast(m, panel_history(panel, bs.back()), 14);
    REQUIRE(fc.size() == 3);
    CHECK(fc[0].size() == 14);
    CHECK(fc[0][0] == gbt_predict(m, X.data.data() + (X.rows - 3) * 6));
}

TEST_CASE("LSTM with zero recurrent weights returns the head bias") {
    std::mt19937_64 rng(8);
    auto cfg = LstmConfig::multi_step();
    cfg.hidden = {5, 3};
    auto m = make_lstm(cfg, 3, 6, 4);
    for (auto& layer : m.layers)
        for (auto* t : {&layer.Wf, &layer.Wi, &layer.Wo, &layer.Wc, &layer.Uf, &layer.Ui, &layer.Uo, &layer.Uc,
                        &layer.bf, &layer.bi, &layer.bo, &layer.bc})
            for (auto& v : t->value().data) v = 0.0;
    for (auto& v : m.u.value().data) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    auto out = lstm_forward(m, {random_mat(4, 6, rng), random_mat(4, 6, rng)}).value();
    REQUIRE(out.rows == 6);
    REQUIRE(out.cols == 14);
    for (std::size_t g = 0; g < 2; ++g)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t h = 0; h < 14; ++h) CHECK(out(g * 3 + i, h) == m.u.value()(0, i * 14 + h));
}

TEST_CASE("LSTM gradients match finite differences") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 5; ++trial) CHECK(spotv2::testing::lstm_fd_error(rng) < 1e-4);
}

TEST_CASE("LSTM gates stay inside the unit interval") {
    std::mt19937_64 rng(10);
    LstmConfig cfg;
    cfg.hidden = {6, 4};
    auto m = make_lstm(cfg, 2, 3, 5);
    LstmGates gates;
    lstm_forward(m, {random_mat(5, 3, rng, -5, 5)}, false, nullptr, &gates);
    REQUIRE(gates.f.size() == 2);
    for (const auto* fam : {&gates.f, &gates.i, &gates.o})
        for (const auto& g : *fam)
            for (double v : g.data) {
                CHECK(v > 0.0);
                CHECK(v < 1.0);
            }
}

TEST_CASE("LSTM sequence reads vols and pair covols oldest first") {
    auto panel = spotv2::testing::blank_panel(3, 28);
    for (std::size_t b = 0; b < 28; ++b) {
        for (std::size_t i = 0; i < 3; ++i) panel.vol[i][b] = 10.0 * i + b;
        for (std::size_t k = 0; k < 3; ++k) panel.covol[k][b] = 100.0 + 10.0 * k + b;
    }
    auto snaps = graphs::build_snapshots(panel, 2, graphs::Horizon::Single);
    const auto& s = snaps[4];
    auto seq = lstm_sequence(s, 2);
    CHECK(seq.rows == 3);
    CHECK(seq.cols == 6);
    for (std::size_t t = 0; t < 3; ++t) {
        const auto b = s.b - 2 + t;
        for (std::size_t i = 0; i < 3; ++i) CHECK(seq(t, i) == panel.vol[i][b]);
        for (std::size_t k = 0; k < 3; ++k) CHECK(seq(t, 3 + k) == panel.covol[k][b]);
    }
}

TEST_CASE("LSTM training lowers the loss and round-trips") {
    std::mt19937_64 rng(11);
    std::vector<graphs::GraphSnapshot> data;
    for (std::size_t k = 0; k < 16; ++k) {
        auto s = spotv2::testing::random_snapshot(3, 1, 1, rng, k);
        for (std::size_t i = 0; i < 3; ++i) s.target(i, 0) = 0.5 * s.node(i, 0);
        data.push_back(std::move(s));
    }
    LstmConfig cfg;
    cfg.hidden = {8};
    cfg.dropout = 0.0;
    cfg.epochs = 200;
    cfg.batch_size = 4;
    cfg.optim.lr = 1e-2;
    auto m = make_lstm(cfg, 3, 6, 2);
    auto hist = lstm_train(m, data, {}, 1);
    CHECK(hist.back().train < 0.2 * hist.front().train);

    auto dir = std::filesystem::temp_directory_path() / "spotv2_lstm_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    save_lstm(dir / "l.json", m, {{"name", "lstm"}});
    auto back = load_lstm(dir / "l.json");
    auto a = lstm_predict(m, data, 1), b = lstm_predict(back, data, 1);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].data == b[k].data);
    std::filesystem::remove_all(dir);
}
