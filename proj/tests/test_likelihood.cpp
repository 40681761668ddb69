#include "doctest.h"

#include <cmath>

#include "vnngp/errors.hpp"
#include "vnngp/likelihood.hpp"
#include "vnngp/rng.hpp"

using namespace vnngp;

TEST_CASE("gauss-hermite rules integrate monomials exactly") {
    // integral of e^{-x^2} x^p over R: sqrt(pi) for p=0, sqrt(pi)/2 for p=2,
    // 3 sqrt(pi)/4 for p=4; odd powers vanish.
    for (int order : {1, 2, 5, 20, 64}) {
        const auto& rule = gauss_hermite(order);
        REQUIRE(rule.nodes.size() == order);
        CHECK(rule.weights.sum() == doctest::Approx(kSqrtPi).epsilon(1e-13));
        CHECK(rule.weights.minCoeff() > 0.0);
        double odd = (rule.weights.array() * rule.nodes.array()).sum();
        CHECK(odd == doctest::Approx(0.0).epsilon(1e-12));
        if (order >= 2) {
            double p2 = (rule.weights.array() * rule.nodes.array().square()).sum();
            CHECK(p2 == doctest::Approx(kSqrtPi / 2.0).epsilon(1e-12));
        }
        if (order >= 3) {
            double p4 = (rule.weights.array() * rule.nodes.array().pow(4)).sum();
            CHECK(p4 == doctest::Approx(3.0 * kSqrtPi / 4.0).epsilon(1e-12));
        }
    }
    CHECK(gauss_hermite(1).nodes[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK_THROWS_AS(gauss_hermite(0), ArgumentError);
    CHECK_THROWS_AS(gauss_hermite(257), ArgumentError);
}

TEST_CASE("gaussian expected log-lik pinned values and jensen gap") {
    auto lik = LikelihoodParams::gaussian(1.0);
    CHECK(expected_log_lik(lik, {0.0, 0.0}, 0.0) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-15));
    CHECK(expected_log_lik(lik, {0.0, 1.0}, 0.0) ==
          doctest::Approx(-1.4189385332046727).epsilon(1e-15));
    // the marginal variance enters as an exact -v/(2 sigma^2) correction
    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        double s2 = 0.2 + rng.uniform() * 3.0;
        auto l2 = LikelihoodParams::gaussian(s2);
        double mu = rng.normal(), y = rng.normal(), v = rng.uniform() * 2.0;
        double gap = expected_log_lik(l2, {mu, 0.0}, y) - expected_log_lik(l2, {mu, v}, y);
        CHECK(gap == doctest::Approx(v / (2.0 * s2)).epsilon(1e-12));
    }
}

TEST_CASE("gaussian closed form matches 64-node quadrature") {
    // oracle route: integrate log N(y | f, s2) against N(f | mu, v) numerically
    Rng rng(77);
    const auto& rule = gauss_hermite(64);
    for (int t = 0; t < 200; ++t) {
        double s2 = 0.1 + rng.uniform() * 4.0;
        auto lik = LikelihoodParams::gaussian(s2);
        double mu = 2.0 * rng.normal(), v = rng.uniform() * 3.0, y = 2.0 * rng.normal();
        double quad = 0.0;
        for (int q = 0; q < 64; ++q) {
            double f = mu + std::sqrt(2.0 * v) * rule.nodes[q];
            double r = y - f;
            quad += rule.weights[q] * (-0.5 * (kLog2Pi + std::log(s2)) - r * r / (2.0 * s2));
        }
        quad /= kSqrtPi;
        CHECK(expected_log_lik(lik, {mu, v}, y) == doctest::Approx(quad).epsilon(1e-10));
    }
}

TEST_CASE("bernoulli expected log-lik pinned value and quadrature stability") {
    auto lik = LikelihoodParams::bernoulli();
    CHECK(expected_log_lik(lik, {0.0, 0.0}, 1.0) ==
          doctest::Approx(-0.6931471805599453).epsilon(1e-14));
    CHECK(expected_log_lik(lik, {0.0, 0.0}, -1.0) ==
          doctest::Approx(-0.6931471805599453).epsilon(1e-14));
    // symmetric under (mu, y) -> (-mu, -y)
    CHECK(expected_log_lik(lik, {0.7, 0.5}, 1.0) ==
          doctest::Approx(expected_log_lik(lik, {-0.7, 0.5}, -1.0)).epsilon(1e-13));
    // doubling the default order moves the result only by the order-20
    // truncation error (observed < 4e-7 over this range of marginals)
    Rng rng(12);
    for (int t = 0; t < 50; ++t) {
        GaussianMarginal q{2.0 * rng.normal(), rng.uniform() * 3.0};
        double y = rng.uniform() < 0.5 ? -1.0 : 1.0;
        auto l20 = lik;
        l20.quad_order = 20;
        auto l40 = lik;
        l40.quad_order = 40;
        CHECK(std::abs(expected_log_lik(l20, q, y) - expected_log_lik(l40, q, y)) < 2e-6);
    }
    CHECK_THROWS_AS(expected_log_lik(lik, {0.0, 1.0}, 0.5), ArgumentError);
}

TEST_CASE("student-t expected log-lik reduces to the log pdf at zero variance") {
    double nu = 4.0, sigma = 0.8;
    auto lik = LikelihoodParams::student_t(nu, sigma);
    double y = 1.3, mu = 0.2;
    double r = (y - mu) / sigma;
    double ref = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) -
                 0.5 * std::log(nu * M_PI) - std::log(sigma) -
                 (nu + 1) / 2 * std::log1p(r * r / nu);
    CHECK(expected_log_lik(lik, {mu, 0.0}, y) == doctest::Approx(ref).epsilon(1e-12));
    // positive marginal variance can only lower the expected log pdf at the mode
    CHECK(expected_log_lik(lik, {y, 1.0}, y) < expected_log_lik(lik, {y, 0.0}, y));
}

TEST_CASE("expected log-lik gradients match finite differences") {
    Rng rng(55);
    auto check_grads = [&](const LikelihoodParams& lik, GaussianMarginal q, double y) {
        EllGrad g;
        expected_log_lik(lik, q, y, &g);
        const double h = 1e-6;
        double fm = (expected_log_lik(lik, {q.mean + h, q.variance}, y) -
                     expected_log_lik(lik, {q.mean - h, q.variance}, y)) /
                    (2 * h);
        CHECK(g.d_mean == doctest::Approx(fm).epsilon(5e-6));
        double fv = (expected_log_lik(lik, {q.mean, q.variance + h}, y) -
                     expected_log_lik(lik, {q.mean, q.variance - h}, y)) /
                    (2 * h);
        CHECK(g.d_var == doctest::Approx(fv).epsilon(5e-5));
        if (lik.has_trainable()) {
            auto lp = lik, lm = lik;
            lp.set_trainable_raw(lik.trainable_raw() + h);
            lm.set_trainable_raw(lik.trainable_raw() - h);
            double fr = (expected_log_lik(lp, q, y) - expected_log_lik(lm, q, y)) / (2 * h);
            CHECK(g.d_raw == doctest::Approx(fr).epsilon(5e-6));
        }
    };
    for (int t = 0; t < 15; ++t) {
        GaussianMarginal q{rng.normal(), 0.3 + rng.uniform() * 2.0};
        double yg = rng.normal();
        check_grads(LikelihoodParams::gaussian(0.3 + rng.uniform()), q, yg);
        check_grads(LikelihoodParams::bernoulli(), q, rng.uniform() < 0.5 ? -1.0 : 1.0);
        check_grads(LikelihoodParams::student_t(4.0, 0.5 + rng.uniform()), q, yg);
    }
}

TEST_CASE("predictive nll pinned values and quadrature cross-check") {
    auto g1 = LikelihoodParams::gaussian(1.0);
    CHECK(predictive_nll(g1, {2.0, 0.0}, 2.0) ==
          doctest::Approx(0.9189385332046727).epsilon(1e-14));
    auto g05 = LikelihoodParams::gaussian(0.5);
    CHECK(predictive_nll(g05, {0.0, 0.5}, 1.0) ==
          doctest::Approx(1.4189385332046727).epsilon(1e-14));

    // bernoulli closed form equals the probit integral
    auto bern = LikelihoodParams::bernoulli();
    Rng rng(3);
    const auto& rule = gauss_hermite(64);
    for (int t = 0; t < 30; ++t) {
        GaussianMarginal q{2.0 * rng.normal(), rng.uniform() * 2.0};
        double y = rng.uniform() < 0.5 ? -1.0 : 1.0;
        double p = 0.0;
        for (int k = 0; k < 64; ++k) {
            double f = q.mean + std::sqrt(2.0 * q.variance) * rule.nodes[k];
            p += rule.weights[k] * norm_cdf(y * f);
        }
        p /= kSqrtPi;
        CHECK(predictive_nll(bern, q, y) == doctest::Approx(-std::log(p)).epsilon(1e-9));
        double pp = probit_predictive_prob(q);
        CHECK(pp == doctest::Approx(norm_cdf(q.mean / std::sqrt(1.0 + q.variance)))
                        .epsilon(1e-14));
    }

    // student-t: at zero marginal variance the mixture collapses to one pdf
    auto st = LikelihoodParams::student_t(5.0, 1.2);
    double y = 0.4;
    CHECK(predictive_nll(st, {0.0, 0.0}, y) ==
          doctest::Approx(-expected_log_lik(st, {0.0, 0.0}, y)).epsilon(1e-10));
}

TEST_CASE("factories validate their domains") {
    CHECK_THROWS_AS(LikelihoodParams::gaussian(0.0), ArgumentError);
    CHECK_THROWS_AS(LikelihoodParams::gaussian(-1.0), ArgumentError);
    CHECK_THROWS_AS(LikelihoodParams::student_t(1.0, 1.0), ArgumentError);
    CHECK_THROWS_AS(LikelihoodParams::student_t(4.0, 0.0), ArgumentError);
    CHECK_THROWS_AS(likelihood_kind_from_string("poisson"), ArgumentError);
    CHECK(likelihood_kind_from_string("student_t") == LikelihoodKind::StudentT);

    auto bern = LikelihoodParams::bernoulli();
    CHECK(!bern.has_trainable());
    CHECK_THROWS_AS(bern.trainable_raw(), ArgumentError);
    auto g = LikelihoodParams::gaussian(0.7);
    CHECK(g.noise() == doctest::Approx(0.7).epsilon(1e-12));
    g.set_trainable_raw(0.0);
    CHECK(g.noise() == doctest::Approx(0.6931471805599453).epsilon(1e-14));

    CHECK_THROWS_AS(expected_log_lik(g, {0.0, -1.0}, 0.0), ArgumentError);
}
