#include <cmath>
#include <random>

#include "cgmatch/errors.hpp"
#include "cgmatch/fds.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cgmatch;
using namespace cgmatch::fds;

TEST_CASE("batch_means") {
    auto m = batch_means(std::vector<double>{0.9, 0.7}, std::vector<double>{0.0, 0.0});
    CHECK(m.confidence == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(m.count_gap == 0.0);
    CHECK_THROWS_AS(batch_means(std::vector<double>{}, std::vector<double>{}), InvalidInput);
    CHECK_THROWS_AS(batch_means(std::vector<double>{0.5}, std::vector<double>{}), InvalidInput);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(447), c(447);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = u(rng);
        c[i] = std::floor(30 * u(rng));
    }
    // pairwise summation
    auto pairwise = [](auto&& self, const double* x, std::size_t n) -> double {
        if (n == 1) return x[0];
        return self(self, x, n / 2) + self(self, x + n / 2, n - n / 2);
    };
    auto r = batch_means(p, c);
    CHECK(std::abs(r.confidence - pairwise(pairwise, p.data(), p.size()) / 447) < 1e-12);
    CHECK(std::abs(r.count_gap - pairwise(pairwise, c.data(), c.size()) / 447) < 1e-12);
}

TEST_CASE("ema_update") {
    auto s = make_threshold_state(ThresholdMode::GlobalEMA, 0.999, std::nullopt);
    s.tau_e = 0.5;
    s.tau_a = 10.0;
    ema_update(s, {0.7, 20.0});
    CHECK(s.tau_e == doctest::Approx(0.5002).epsilon(1e-14));
    CHECK(s.tau_a == doctest::Approx(10.01).epsilon(1e-14));

    SUBCASE("zero momentum tracks the batch mean") {
        auto z = make_threshold_state(ThresholdMode::GlobalEMA, 0.0, std::nullopt);
        z.tau_e = 0.2;
        ema_update(z, {0.66, 3.5});
        CHECK(z.tau_e == 0.66);
        CHECK(z.tau_a == 3.5);
    }
    SUBCASE("constant stream converges geometrically") {
        auto g = make_threshold_state(ThresholdMode::GlobalEMA, 0.9, std::nullopt);
        g.tau_e = 0.1;
        g.tau_a = 0.0;
        for (int t = 1; t <= 200; ++t) {
            ema_update(g, {0.8, 4.0});
            CHECK(std::abs(std::abs(g.tau_e - 0.8) - std::pow(0.9, t) * 0.7) < 1e-12);
            CHECK(std::abs(std::abs(g.tau_a - 4.0) - std::pow(0.9, t) * 4.0) < 1e-12);
        }
    }
    SUBCASE("fixed mode keeps the confidence threshold") {
        auto f = make_threshold_state(ThresholdMode::Fixed, 0.5, std::nullopt, 0.95);
        CHECK(f.tau_e == 0.95);
        ema_update(f, {0.1, 2.0});
        CHECK(f.tau_e == 0.95);
        CHECK(f.tau_a == 1.0);
    }
}

TEST_CASE("ema_update stays between the previous value and the batch mean") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        auto s = make_threshold_state(ThresholdMode::GlobalEMA, u(rng) * 0.9999, std::nullopt);
        s.tau_e = u(rng);
        s.tau_a = 30 * u(rng);
        const double pe = s.tau_e, pa = s.tau_a;
        const BatchMeans m{u(rng), 30 * u(rng)};
        ema_update(s, m);
        REQUIRE(s.tau_e >= std::min(pe, m.confidence));
        REQUIRE(s.tau_e <= std::max(pe, m.confidence));
        REQUIRE(s.tau_a >= std::min(pa, m.count_gap));
        REQUIRE(s.tau_a <= std::max(pa, m.count_gap));
    }
}

TEST_CASE("clamp") {
    CHECK(clamp_threshold(0.99, 0.9, 0.95) == 0.95);
    CHECK(clamp_threshold(0.93, 0.9, 0.95) == 0.93);
    CHECK(clamp_threshold(0.1, 0.9, 0.95) == 0.9);
    CHECK_THROWS_AS(clamp_threshold(0.5, 0.95, 0.9), ConfigError);
    CHECK_THROWS_AS(make_threshold_state(ThresholdMode::GlobalEMA, 0.9, ClampRange{0.95, 0.9}),
                    ConfigError);
    CHECK_THROWS_AS(make_threshold_state(ThresholdMode::GlobalEMA, 1.0, std::nullopt), ConfigError);

    auto s = make_threshold_state(ThresholdMode::GlobalEMA, 0.5, ClampRange{});
    initialize(s, {0.3, 2.0});
    CHECK(s.tau_e == 0.9);
    CHECK(s.tau_a == 2.0);
    ema_update(s, {1.0, 0.0});
    CHECK(s.tau_e == 0.95);
}

TEST_CASE("initialize starts at the batch means") {
    auto s = make_threshold_state(ThresholdMode::GlobalEMA, 0.999, std::nullopt);
    CHECK_FALSE(s.initialized);
    initialize(s, {0.62, 7.25});
    CHECK(s.initialized);
    CHECK(s.tau_e == 0.62);
    CHECK(s.tau_a == 7.25);
}

TEST_CASE("partition examples") {
    const std::vector<SampleId> ids{SampleId{1}, SampleId{2}, SampleId{3}, SampleId{4}};
    const std::vector<double> p{0.96, 0.40, 0.40, 0.95};
    const std::vector<int> y{0, 1, 2, 1};
    const std::vector<double> cg{0.0, 3.0, 2.0, 0.0};
    auto part = partition(ids, p, y, cg, SelectionThresholds::uniform(0.95, 2.5, 3));
    REQUIRE(part.easy.size() == 2);
    CHECK(part.easy[0].id.value == 1);
    CHECK(part.easy[1].id.value == 4);  // equality counts as easy
    REQUIRE(part.ambiguous.size() == 1);
    CHECK(part.ambiguous[0].id.value == 2);
    CHECK(part.ambiguous[0].pseudo_label == 1);
    CHECK(part.ambiguous[0].row == 1);
    REQUIRE(part.hard.size() == 1);
    CHECK(part.hard[0].id.value == 3);

    auto eq = partition(ids, p, y, std::vector<double>{0.0, 2.5, 2.5, 0.0},
                        SelectionThresholds::uniform(0.95, 2.5, 3));
    CHECK(eq.ambiguous.size() == 2);

    CHECK_THROWS_AS(partition(ids, p, y, std::vector<double>{0.0},
                              SelectionThresholds::uniform(0.95, 2.5, 3)),
                    InvalidInput);
    CHECK_THROWS_AS(partition(ids, p, y, cg, SelectionThresholds::uniform(NAN, 2.5, 3)),
                    InvalidInput);
}

TEST_CASE("partition matches the per-element oracle and covers the batch") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 200; ++i) {
        auto c = testing::random_partition_case(rng);
        REQUIRE(testing::partition_matches_oracle(c));
        auto p = partition(c.ids, c.max_probs, c.labels, c.cgs, c.thresholds);
        REQUIRE(p.size() == c.ids.size());
        std::vector<std::uint32_t> all;
        for (const auto* set : {&p.easy, &p.ambiguous, &p.hard}) {
            auto ids = testing::sorted_ids(*set);
            all.insert(all.end(), ids.begin(), ids.end());
        }
        std::sort(all.begin(), all.end());
        CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
        // easy and ambiguous together contain every confident sample
        for (std::size_t j = 0; j < c.ids.size(); ++j)
            if (c.max_probs[j] >= c.thresholds.easy_by_class[c.labels[j]]) {
                auto h = testing::sorted_ids(p.hard);
                CHECK_FALSE(std::binary_search(h.begin(), h.end(), c.ids[j].value));
            }
    }
}

TEST_CASE("raising a threshold never grows its set") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 100; ++i) {
        auto c = testing::random_partition_case(rng);
        auto base = partition(c.ids, c.max_probs, c.labels, c.cgs, c.thresholds);
        auto up_e = c.thresholds;
        for (auto& t : up_e.easy_by_class) t += 0.1;
        CHECK(partition(c.ids, c.max_probs, c.labels, c.cgs, up_e).easy.size() <= base.easy.size());
        auto up_a = c.thresholds;
        up_a.ambiguity += 1.0;
        CHECK(partition(c.ids, c.max_probs, c.labels, c.cgs, up_a).ambiguous.size() <=
              base.ambiguous.size());
    }
}

TEST_CASE("self-adaptive thresholds") {
    SUBCASE("equal class means give the global value everywhere") {
        auto s = make_threshold_state(ThresholdMode::SelfAdaptive, 0.999, std::nullopt);
        Matrix probs(2, 2);
        probs(0, 0) = 0.8;
        probs(0, 1) = 0.2;
        probs(1, 0) = 0.2;
        probs(1, 1) = 0.8;
        auto tau = sat_thresholds(s, probs);
        CHECK(tau[0] == doctest::Approx(0.8).epsilon(1e-15));
        CHECK(tau[1] == tau[0]);
    }
    SUBCASE("ratio scaling") {
        auto s = make_threshold_state(ThresholdMode::SelfAdaptive, 0.5, std::nullopt);
        s.classwise = ClassWiseState{1.0, {1.0, 0.4}, true};
        Matrix probs(2, 2);
        probs(0, 0) = 0.9;
        probs(0, 1) = 0.1;
        probs(1, 0) = 0.3;
        probs(1, 1) = 0.7;
        // class means [0.6, 0.4] and mean confidence 0.8 move the state to
        // p~ = [0.8, 0.4], global 0.9
        auto tau = sat_thresholds(s, probs);
        CHECK(s.classwise.global == doctest::Approx(0.9).epsilon(1e-14));
        CHECK(tau[0] == doctest::Approx(0.9).epsilon(1e-14));
        CHECK(tau[1] == doctest::Approx(0.45).epsilon(1e-14));
    }
    SUBCASE("class EMAs follow the unrolled recurrence") {
        auto s = make_threshold_state(ThresholdMode::SelfAdaptive, 0.7, std::nullopt);
        Matrix a(1, 3), b(1, 3);
        a(0, 0) = 0.5, a(0, 1) = 0.3, a(0, 2) = 0.2;
        b(0, 0) = 0.1, b(0, 1) = 0.1, b(0, 2) = 0.8;
        sat_thresholds(s, a);
        for (int t = 1; t <= 30; ++t) {
            sat_thresholds(s, b);
            const double w = std::pow(0.7, t);
            CHECK(s.classwise.per_class[2] == doctest::Approx(w * 0.2 + (1 - w) * 0.8).epsilon(1e-12));
            CHECK(s.classwise.global == doctest::Approx(w * 0.5 + (1 - w) * 0.8).epsilon(1e-12));
        }
    }
    SUBCASE("clamped") {
        auto s = make_threshold_state(ThresholdMode::SelfAdaptive, 0.9, ClampRange{});
        Matrix probs(1, 2);
        probs(0, 0) = 0.6;
        probs(0, 1) = 0.4;
        for (double t : sat_thresholds(s, probs)) CHECK((t >= 0.9 && t <= 0.95));
    }
}
