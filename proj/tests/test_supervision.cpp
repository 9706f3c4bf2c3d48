#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cgar/ops.hpp"
#include "cgar/supervision.hpp"

using namespace cgar;

TEST_CASE("weight normalizer matches direct summation") {
    // Frozen closed-form values for the canonical decay setting.
    SupervisionWeights w = compute_weights(0.7, 16);
    CHECK(w.z == doctest::Approx(3.3222556898101330).epsilon(1e-15));
    CHECK(w.w[0] == doctest::Approx(0.30099909661884617).epsilon(1e-14));

    double direct = 0;
    for (int t = 0; t < 16; ++t) direct += std::pow(0.7, t);
    CHECK(w.z == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("weights sum to one and decay geometrically") {
    for (double lambda : {0.3, 0.5, 0.7, 0.9, 1.0}) {
        for (int n : {1, 2, 4, 7, 16}) {
            SupervisionWeights w = compute_weights(lambda, n);
            REQUIRE(static_cast<int>(w.w.size()) == n);
            double total = 0;
            for (double x : w.w) total += x;
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
            for (int t = 0; t + 1 < n; ++t)
                CHECK(w.w[t] / w.w[t + 1] == doctest::Approx(1.0 / lambda).epsilon(1e-12));
        }
    }
}

TEST_CASE("lambda=1 gives exactly uniform weights") {
    SupervisionWeights w = compute_weights(1.0, 8);
    CHECK(w.z == 8.0);
    for (double x : w.w) CHECK(x == 0.125);  // representable exactly
}

TEST_CASE("weight parameters are validated") {
    CHECK_THROWS_AS((void)compute_weights(0.0, 4), ValidationError);
    CHECK_THROWS_AS((void)compute_weights(-0.5, 4), ValidationError);
    CHECK_THROWS_AS((void)compute_weights(1.5, 4), ValidationError);
    CHECK_THROWS_AS((void)compute_weights(0.7, 0), ValidationError);
}

TEST_CASE("step loss combines weighted answer loss and halt loss") {
    Tensor logits = Tensor::from({2, 3}, {2.0, 0.0, 0.0, 0.0, 3.0, 0.0});
    std::vector<int> targets{0, 1};
    Tensor q = Tensor::from({2}, {0.5, 0.5});
    SupervisionWeights w = compute_weights(0.7, 4);

    StepLoss sl = cgar_step_loss(logits, targets, q, w, 1, 0.5);
    CHECK(sl.exact_match);  // argmax equals targets
    const double ce =
        (std::log(std::exp(2.0) + 2.0) - 2.0) + (std::log(std::exp(3.0) + 2.0) - 3.0);
    CHECK(sl.ce == doctest::Approx(ce).epsilon(1e-12));
    CHECK(sl.weighted_ce == doctest::Approx(w.w[0] * ce).epsilon(1e-12));
    CHECK(sl.bce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(sl.total.item() ==
          doctest::Approx(w.w[0] * ce + 0.5 * std::log(2.0)).epsilon(1e-12));

    StepLoss s3 = cgar_step_loss(logits, targets, q, w, 3, 0.5);
    CHECK(s3.weighted_ce == doctest::Approx(w.w[2] * ce).epsilon(1e-12));
    CHECK_THROWS_AS(
        (void)cgar_step_loss(logits, targets, q, w, 5, 0.5), ValidationError);
    CHECK_THROWS_AS(
        (void)cgar_step_loss(logits, targets, q, w, 0, 0.5), ValidationError);
}

TEST_CASE("halt loss can share the decay normalizer") {
    Tensor logits = Tensor::from({1, 2}, {1.0, 0.0});
    std::vector<int> targets{1};  // wrong argmax -> exact_match false
    Tensor q = Tensor::from({1}, {0.3});
    SupervisionWeights w = compute_weights(0.7, 4);

    StepLoss outside = cgar_step_loss(logits, targets, q, w, 1, 0.5, false);
    StepLoss inside = cgar_step_loss(logits, targets, q, w, 1, 0.5, true);
    CHECK_FALSE(outside.exact_match);
    // target false at q=0.3 -> -log(0.7)
    CHECK(outside.bce == doctest::Approx(-std::log(0.7)).epsilon(1e-12));
    CHECK(outside.total.item() ==
          doctest::Approx(outside.weighted_ce + 0.5 * outside.bce).epsilon(1e-12));
    CHECK(inside.total.item() ==
          doctest::Approx(inside.weighted_ce + 0.5 / w.z * inside.bce).epsilon(1e-12));
}

TEST_CASE("beta=0 drops the halt term entirely") {
    Tensor logits = Tensor::from({1, 2}, {1.0, 0.0});
    std::vector<int> targets{0};
    Tensor q = Tensor::from({1}, {0.9});
    SupervisionWeights w = compute_weights(1.0, 2);
    StepLoss sl = cgar_step_loss(logits, targets, q, w, 1, 0.0);
    CHECK(sl.total.item() == sl.weighted_ce);  // bitwise: no + beta*bce applied
    CHECK(sl.bce == 0.0);
}

TEST_CASE("uniform weighting reproduces a plain mean over steps bitwise") {
    // With lambda=1 each weight is 1/n; for power-of-two n the scaled sum
    // equals scaling the sum, so the two loss formulations agree exactly.
    std::mt19937_64 rng(321);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 1 << rand_index(rng, 5);  // 1..16
        const int L = 2 + rand_index(rng, 8);
        const int V = 2 + rand_index(rng, 4);
        SupervisionWeights w = compute_weights(1.0, n);
        std::vector<int> targets(L);
        for (int& t : targets) t = rand_index(rng, V);

        Tensor weighted_total = Tensor::scalar(0);
        Tensor plain_sum = Tensor::scalar(0);
        Tensor q = Tensor::from({L}, std::vector<real>(L, real(0.5)));
        for (int t = 1; t <= n; ++t) {
            std::vector<real> vals(L * V);
            for (real& v : vals) v = static_cast<real>(rand_normal(rng));
            Tensor logits = Tensor::from({L, V}, std::move(vals));
            StepLoss sl = cgar_step_loss(logits, targets, q, w, t, 0.0);
            weighted_total = add(weighted_total, sl.total);
            plain_sum = add(plain_sum, cross_entropy_sum(logits, targets));
        }
        CHECK(weighted_total.item() == scale(plain_sum, real(1.0) / n).item());
    }
}

TEST_CASE("decay fit recovers a synthetic exponential") {
    const double alpha = 0.357;
    std::vector<double> norms;
    for (int t = 1; t <= 12; ++t) norms.push_back(std::exp(-alpha * t) * 3.7);
    CHECK(gradient_decay_profile(norms) == doctest::Approx(alpha).epsilon(1e-9));

    std::vector<double> flat(5, 2.0);
    CHECK(gradient_decay_profile(flat) == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<double> growing;
    for (int t = 1; t <= 6; ++t) growing.push_back(std::exp(0.2 * t));
    CHECK(gradient_decay_profile(growing) == doctest::Approx(-0.2).epsilon(1e-9));

    const std::vector<double> two{1.0, 0.5};
    CHECK_THROWS_AS((void)gradient_decay_profile(two), ValidationError);
    const std::vector<double> nonpos{1.0, 0.0, 0.5};
    CHECK_THROWS_AS((void)gradient_decay_profile(nonpos), ValidationError);
}

TEST_CASE("gradient variance is the unbiased sample variance") {
    std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
    CHECK(gradient_variance(xs) == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS((void)gradient_variance(one), ValidationError);
}
