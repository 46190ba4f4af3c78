#include <catch2/catch_amalgamated.hpp>

#include "rccn/loss.hpp"
#include "rccn/metrics.hpp"
#include "rccn/rng.hpp"

using namespace rccn;

TEST_CASE("softmax sums to one, is shift invariant and overflow safe") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> l(7);
        for (double& v : l) v = rng.uniform(-5.0, 5.0);
        auto p = softmax_probs(l);
        double s = 0.0;
        for (double v : p) s += v;
        CHECK(std::abs(s - 1.0) < 1e-12);
        auto shifted = l;
        for (double& v : shifted) v += 123.456;
        auto p2 = softmax_probs(shifted);
        for (size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - p2[i]) < 1e-12);
    }
    auto big = softmax_probs({1000.0, 1001.0, 999.0});
    CHECK(std::isfinite(big[0]));
    CHECK(std::abs(big[0] + big[1] + big[2] - 1.0) < 1e-12);
    CHECK_THROWS_AS(softmax_probs(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("softmax_channels normalizes every pixel") {
    Rng rng(6);
    Tensor logits({4, 3, 2});
    for (double& v : logits.data) v = rng.uniform(-3.0, 3.0);
    Tensor p = softmax_channels(logits);
    for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 2; ++w) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += p.data[static_cast<size_t>((k * 3 + h) * 2 + w)];
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
}

TEST_CASE("classification loss: uniform logits give ln K exactly") {
    Tensor logits = Tensor::zeros({5, 2, 2});
    std::vector<int> target(4, 3);
    auto r = classification_loss(logits, target, 5);
    CHECK(r.loss == Catch::Approx(std::log(5.0)).epsilon(1e-14));
    CHECK(r.n_valid == 4);
}

TEST_CASE("classification loss matches the hand-computed 3-logit case") {
    // logits [1,2,3], target class 2: loss = -log(e^3 / (e^1+e^2+e^3))
    Tensor logits({3, 1, 1}, {1.0, 2.0, 3.0});
    auto r = classification_loss(logits, {2}, 3);
    CHECK(r.loss == Catch::Approx(0.40760596444438046).epsilon(1e-14));
    CHECK(r.grad.data[0] == Catch::Approx(0.09003057317038046).epsilon(1e-12));
    CHECK(r.grad.data[1] == Catch::Approx(0.24472847105479764).epsilon(1e-12));
    CHECK(r.grad.data[2] == Catch::Approx(-0.3347590442251782).epsilon(1e-12));
}

TEST_CASE("classification loss gradient sums to zero per valid pixel") {
    Rng rng(7);
    Tensor logits({6, 2, 3});
    for (double& v : logits.data) v = rng.uniform(-2.0, 2.0);
    std::vector<int> target{0, 5, 6, 2, 6, 3};  // 6 = ignore
    auto r = classification_loss(logits, target, 6);
    CHECK(r.n_valid == 4);
    for (int i = 0; i < 6; ++i) {
        double s = 0.0;
        for (int k = 0; k < 6; ++k) s += r.grad.data[static_cast<size_t>(k * 6 + i)];
        if (target[static_cast<size_t>(i)] == 6)
            CHECK(s == 0.0);  // ignored pixels get exactly zero gradient
        else
            CHECK(std::abs(s) < 1e-14);
    }
    CHECK_THROWS_AS(classification_loss(logits, std::vector<int>{0, 1, 2, 3, 4, 7}, 6),
                    std::invalid_argument);
}

TEST_CASE("classification loss: all-ignored flags empty") {
    Tensor logits = Tensor::zeros({3, 1, 2});
    auto r = classification_loss(logits, {3, 3}, 3);
    CHECK(r.empty);
    CHECK(r.loss == 0.0);
}

TEST_CASE("regression loss value and gradient") {
    Tensor pred({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor target({2, 2}, {1.0, 1.0, 3.0, 2.0});
    std::vector<uint8_t> mask{1, 1, 0, 1};
    auto r = regression_loss(pred, target, mask);
    // errors 0, 1, (masked), 2 over 3 valid: (0+1+4)/3
    CHECK(r.loss == Catch::Approx(5.0 / 3.0).epsilon(1e-14));
    CHECK(r.grad.data[0] == 0.0);
    CHECK(r.grad.data[1] == Catch::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(r.grad.data[2] == 0.0);  // masked
    CHECK(r.grad.data[3] == Catch::Approx(4.0 / 3.0).epsilon(1e-14));
    auto empty = regression_loss(pred, target, {0, 0, 0, 0});
    CHECK(empty.empty);
    CHECK_THROWS_AS(regression_loss(pred, Tensor({4}), mask), std::invalid_argument);
}

TEST_CASE("perfect predictions give (near) zero joint loss") {
    Tensor pred({2, 2}, {0.1, 0.2, 0.3, 0.4});
    auto r = regression_loss(pred, pred, {1, 1, 1, 1});
    CHECK(r.loss == 0.0);
    // a very confident correct logit drives the class term to ~0
    Tensor logits = Tensor::zeros({4, 1, 1});
    logits.data[2] = 50.0;
    auto c = classification_loss(logits, {2}, 4);
    CHECK(c.loss < 1e-8);
}

TEST_CASE("metrics match the worked single-pixel case (pred 2, target 4)") {
    Tensor pred({1, 1}, {2.0});
    Tensor target({1, 1}, {4.0});
    auto m = compute_metrics(pred, target, {1});
    CHECK(m.abs_rel == Catch::Approx(0.5).margin(1e-15));
    CHECK(m.squa_rel == Catch::Approx(1.0).margin(1e-15));
    CHECK(m.rmse == Catch::Approx(2.0).margin(1e-15));
    CHECK(m.rmse_log == Catch::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(m.ave_log10 == Catch::Approx(std::log10(2.0)).epsilon(1e-15));
    CHECK(m.delta1 == 0.0);
    CHECK(m.delta2 == 0.0);
    CHECK(m.delta3 == 0.0);  // ratio 2 >= 1.25^3
}

TEST_CASE("metrics agree with an independent scalar oracle to 1e-12") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(50));
        Tensor pred({n}), target({n});
        std::vector<uint8_t> mask(static_cast<size_t>(n));
        long nv = 0;
        for (int i = 0; i < n; ++i) {
            pred.data[static_cast<size_t>(i)] = rng.uniform(0.5, 20.0);
            target.data[static_cast<size_t>(i)] = rng.uniform(0.5, 20.0);
            mask[static_cast<size_t>(i)] = rng.bernoulli(0.8) ? 1 : 0;
            nv += mask[static_cast<size_t>(i)];
        }
        if (nv == 0) mask[0] = 1, ++nv;
        auto m = compute_metrics(pred, target, mask);

        double d1 = 0, d2 = 0, d3 = 0, ar = 0, sr = 0, sq = 0, sql = 0, al = 0;
        for (int i = 0; i < n; ++i) {
            if (!mask[static_cast<size_t>(i)]) continue;
            const double d = pred.data[static_cast<size_t>(i)];
            const double g = target.data[static_cast<size_t>(i)];
            const double ratio = std::max(d / g, g / d);
            d1 += ratio < 1.25;
            d2 += ratio < 1.25 * 1.25;
            d3 += ratio < 1.25 * 1.25 * 1.25;
            ar += std::abs(d - g) / g;
            sr += (d - g) * (d - g) / g;
            sq += (d - g) * (d - g);
            sql += std::pow(std::log(d) - std::log(g), 2);
            al += std::abs(std::log10(d) - std::log10(g));
        }
        const double dn = static_cast<double>(nv);
        CHECK(std::abs(m.delta1 - d1 / dn) < 1e-12);
        CHECK(std::abs(m.delta2 - d2 / dn) < 1e-12);
        CHECK(std::abs(m.delta3 - d3 / dn) < 1e-12);
        CHECK(std::abs(m.abs_rel - ar / dn) < 1e-12);
        CHECK(std::abs(m.squa_rel - sr / dn) < 1e-12);
        CHECK(std::abs(m.rmse - std::sqrt(sq / dn)) < 1e-12);
        CHECK(std::abs(m.rmse_log - std::sqrt(sql / dn)) < 1e-12);
        CHECK(std::abs(m.ave_log10 - al / dn) < 1e-12);
    }
}

TEST_CASE("metrics: relative statistics are scale invariant") {
    Rng rng(19);
    Tensor pred({20}), target({20});
    for (int i = 0; i < 20; ++i) {
        pred.data[static_cast<size_t>(i)] = rng.uniform(1.0, 10.0);
        target.data[static_cast<size_t>(i)] = rng.uniform(1.0, 10.0);
    }
    std::vector<uint8_t> mask(20, 1);
    auto m1 = compute_metrics(pred, target, mask);
    Tensor ps = pred, ts = target;
    for (double& v : ps.data) v *= 7.0;
    for (double& v : ts.data) v *= 7.0;
    auto m2 = compute_metrics(ps, ts, mask);
    CHECK(m2.delta1 == m1.delta1);
    CHECK(std::abs(m2.abs_rel - m1.abs_rel) < 1e-12);
    CHECK(std::abs(m2.rmse_log - m1.rmse_log) < 1e-12);
    CHECK(std::abs(m2.ave_log10 - m1.ave_log10) < 1e-12);
    CHECK(m2.rmse == Catch::Approx(7.0 * m1.rmse).epsilon(1e-12));
}

TEST_CASE("metrics error handling and depth cap") {
    Tensor pred({2}, {1.0, 100.0});
    Tensor target({2}, {1.0, 1.0});
    CHECK_THROWS_AS(compute_metrics(pred, target, {0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(compute_metrics(Tensor({2}, {0.0, 1.0}), target, {1, 1}),
                    std::invalid_argument);
    auto capped = compute_metrics(pred, target, {1, 1}, std::pair<double, double>{1.0, 10.0});
    CHECK(capped.rmse == Catch::Approx(std::sqrt(81.0 / 2.0)).epsilon(1e-12));
}

TEST_CASE("ground truth against itself scores perfectly") {
    Rng rng(23);
    Tensor d({30});
    for (double& v : d.data) v = rng.uniform(1.0, 50.0);
    auto m = compute_metrics(d, d, std::vector<uint8_t>(30, 1));
    CHECK(m.delta1 == 1.0);
    CHECK(m.rmse == 0.0);
    CHECK(m.rmse_log == 0.0);
    CHECK(m.abs_rel == 0.0);
}
