#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "doctest.h"

#include "cgmatch/diffnet.hpp"
#include "cgmatch/errors.hpp"
#include "cgmatch/losses.hpp"
#include "support.hpp"

using namespace cgmatch;
using namespace cgmatch::diffnet;

namespace {

ModelParams linear_model(std::size_t d, std::size_t k) {
    auto m = init_params({d, {}, k}, 1);
    return m;
}

}  // namespace

TEST_CASE("forward: zero weights give zero logits") {
    auto m = init_params({3, {4}, 2}, 7);
    for (auto& l : m.layers) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    std::mt19937_64 rng(1);
    const Matrix y = forward(m, testing::random_matrix(5, 3, rng));
    for (double v : y.flat()) CHECK(v == 0.0);
}

TEST_CASE("forward: one-hot input selects a weight row plus bias") {
    auto m = linear_model(3, 4);
    Matrix x(1, 3);
    x(0, 1) = 1.0;
    const Matrix y = forward(m, x);
    for (std::size_t j = 0; j < 4; ++j) CHECK(y(0, j) == m.layers[0].weights[1 * 4 + j] + m.layers[0].bias[j]);
}

TEST_CASE("forward is deterministic and validates input") {
    auto m = init_params({4, {8, 8}, 3}, 3);
    std::mt19937_64 rng(2);
    const Matrix x = testing::random_matrix(6, 4, rng);
    CHECK(forward(m, x) == forward(m, x));
    CHECK_THROWS_AS(forward(m, Matrix(0, 4)), InvalidInput);
    CHECK_THROWS_AS(forward(m, Matrix(2, 5)), InvalidInput);
    m.backend = kernels::Backend::Serial;
    const Matrix ys = forward(m, x);
    m.backend = kernels::Backend::OpenMP;
    CHECK(forward(m, x) == ys);
}

TEST_CASE("softmax") {
    for (double v : softmax(std::vector<double>{0, 0, 0, 0})) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    for (double v : softmax(std::vector<double>{713.0, 713.0, 713.0})) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
    const auto p = softmax(std::vector<double>{std::log(1.0), std::log(3.0)});
    CHECK(std::abs(p[0] - 0.25) < 1e-15);
    CHECK(std::abs(p[1] - 0.75) < 1e-15);
    CHECK_THROWS_AS(softmax(std::vector<double>{0.0, std::numeric_limits<double>::infinity()}), InvalidInput);
    CHECK_THROWS_AS(softmax(std::vector<double>{std::nan("")}), InvalidInput);

    std::mt19937_64 rng(9);
    const Matrix probs = softmax_rows(testing::random_matrix(200, 6, rng, 5.0));
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        double sum = 0.0;
        for (double v : probs.row(r)) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("backward: linear layer with CE matches (p - y) x^T") {
    auto m = linear_model(3, 4);
    Matrix x(1, 3);
    x(0, 0) = 0.5;
    x(0, 1) = -1.0;
    x(0, 2) = 2.0;
    ForwardCache cache;
    const Matrix p = softmax_rows(forward(m, x, &cache));
    Matrix dl(1, 4);
    losses::supervised_ce(p, std::vector<int>{2}, &dl);
    const auto g = backward(m, cache, dl);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(g.layers[0].weights[k * 4 + j] ==
                  doctest::Approx((p(0, j) - (j == 2 ? 1.0 : 0.0)) * x(0, k)).epsilon(1e-14));
}

TEST_CASE("backward: a zero output gradient gives zero gradients everywhere") {
    auto m = init_params({3, {5}, 2}, 4);
    std::mt19937_64 rng(3);
    ForwardCache cache;
    forward(m, testing::random_matrix(4, 3, rng), &cache);
    const auto g = backward(m, cache, Matrix(4, 2));
    for (const auto& l : g.layers) {
        for (double v : l.weights) CHECK(v == 0.0);
        for (double v : l.bias) CHECK(v == 0.0);
    }
}

TEST_CASE("backward: mismatched cache is a consistency error") {
    auto m = init_params({3, {5}, 2}, 4);
    auto other = init_params({3, {6}, 2}, 4);
    std::mt19937_64 rng(3);
    ForwardCache cache;
    forward(other, testing::random_matrix(4, 3, rng), &cache);
    CHECK_THROWS_AS(backward(m, cache, Matrix(4, 2)), ConsistencyError);
    forward(m, testing::random_matrix(4, 3, rng), &cache);
    CHECK_THROWS_AS(backward(m, cache, Matrix(3, 2)), ConsistencyError);
    CHECK_THROWS_AS(backward(m, ForwardCache{}, Matrix(4, 2)), ConsistencyError);
}

TEST_CASE("backward on gathered rows equals backward with the other rows zeroed") {
    auto m = init_params({4, {6, 5}, 3}, 8);
    std::mt19937_64 rng(8);
    ForwardCache cache;
    forward(m, testing::random_matrix(6, 4, rng), &cache);
    Matrix g = testing::random_matrix(6, 3, rng);
    const std::vector<std::size_t> keep{1, 4};
    Matrix masked(6, 3);
    for (auto r : keep)
        for (std::size_t j = 0; j < 3; ++j) masked(r, j) = g(r, j);
    const auto full = backward(m, cache, masked);
    const auto part = backward(m, cache.gather_rows(keep), g.gather_rows(keep));
    for (std::size_t l = 0; l < full.layers.size(); ++l)
        for (std::size_t i = 0; i < full.layers[l].weights.size(); ++i)
            CHECK(part.layers[l].weights[i] == doctest::Approx(full.layers[l].weights[i]).epsilon(1e-13));
}

TEST_CASE("backward matches central differences on random models") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto g = testing::make_instance(testing::LossKind::SupervisedCE, 100 + seed);
        CHECK(testing::check_gradient(testing::LossKind::SupervisedCE, g).max_rel_error <= 1e-4);
    }
}

TEST_CASE("cosine learning rate") {
    CHECK(cosine_lr(0, 20000, 0.03) == 0.03);
    CHECK(cosine_lr(20000, 20000, 0.03) == doctest::Approx(0.03 * std::cos(7 * std::numbers::pi / 16)).epsilon(1e-15));
    CHECK(cosine_lr(20000, 20000, 1.0) == doctest::Approx(0.1951).epsilon(1e-3));
    for (std::uint64_t t = 0; t < 1000; ++t) CHECK(cosine_lr(t, 1000, 0.1) >= cosine_lr(t + 1, 1000, 0.1));
    CHECK_THROWS_AS(cosine_lr(0, 0, 0.03), ConfigError);
    CHECK_THROWS_AS(cosine_lr(11, 10, 0.03), InvalidInput);
}

TEST_CASE("sgd with momentum") {
    auto m = init_params({2, {}, 2}, 5);
    const auto before = m;

    SUBCASE("zero gradient leaves parameters unchanged") {
        auto opt = make_optimizer(m, 0.1, 0.9, 100);
        sgd_step(m, GradientSet::zeros_like(m), opt);
        CHECK(m.layers == before.layers);
    }
    SUBCASE("beta = 0 is plain SGD") {
        auto opt = make_optimizer(m, 0.1, 0.0, 100);
        auto g = GradientSet::zeros_like(m);
        g.layers[0].weights[1] = 2.0;
        sgd_step(m, g, opt);
        CHECK(m.layers[0].weights[1] == doctest::Approx(before.layers[0].weights[1] - 0.2).epsilon(1e-15));
    }
    SUBCASE("two steps with constant g and beta 0.9 move by g * 2.9") {
        // A huge horizon keeps the cosine factor at 1 to double precision.
        auto opt = make_optimizer(m, 1.0, 0.9, 1000000000000ULL);
        auto g = GradientSet::zeros_like(m);
        g.layers[0].bias[0] = 0.5;
        sgd_step(m, g, opt);
        sgd_step(m, g, opt);
        CHECK(before.layers[0].bias[0] - m.layers[0].bias[0] == doctest::Approx(0.5 * 2.9).epsilon(1e-12));
    }
    SUBCASE("non-finite gradient aborts the step") {
        auto opt = make_optimizer(m, 0.1, 0.9, 100);
        auto g = GradientSet::zeros_like(m);
        g.layers[0].weights[0] = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(sgd_step(m, g, opt), DivergenceError);
    }
    SUBCASE("shape mismatch") {
        auto opt = make_optimizer(m, 0.1, 0.9, 100);
        CHECK_THROWS(sgd_step(m, GradientSet::zeros_like(init_params({3, {}, 2}, 1)), opt));
    }
}

TEST_CASE("model text round trip is exact") {
    const auto m = init_params({5, {7, 3}, 4}, 99);
    std::stringstream ss;
    save_model(ss, m);
    const auto back = load_model(ss);
    CHECK(back.arch == m.arch);
    CHECK(back.layers == m.layers);
}
