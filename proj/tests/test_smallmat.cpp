#include "doctest.h"

#include <cmath>

#include "vnngp/errors.hpp"
#include "vnngp/rng.hpp"
#include "vnngp/smallmat.hpp"

using namespace vnngp;

TEST_CASE("identity factors with zero jitter") {
    auto F = chol_jittered(Mat::Identity(2, 2), 1.0);
    CHECK(F.jitter_used == 0.0);
    CHECK(F.L(0, 0) == doctest::Approx(1.0));
    CHECK(F.L(1, 1) == doctest::Approx(1.0));
    CHECK(F.L(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("well conditioned diagonal needs no jitter") {
    Mat A = Mat::Zero(2, 2);
    A(0, 0) = 4.0;
    A(1, 1) = 9.0;
    auto F = chol_jittered(A, 1.0);
    CHECK(F.jitter_used == 0.0);
    CHECK(F.L(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(F.L(1, 1) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(chol_logdet(F) == doctest::Approx(3.58351893845611).epsilon(1e-14));
}

TEST_CASE("singular matrix escalates the jitter ladder past the rcond gate") {
    // all-ones 2x2: rank 1. jitter 1e-8 leaves rcond ~ 5e-9, below the 1e-8
    // gate, so the ladder lands on 1e-6.
    Mat A = Mat::Ones(2, 2);
    auto F = chol_jittered(A, 1.0);
    CHECK(F.jitter_used == doctest::Approx(1e-6).epsilon(1e-12));
    // scale multiplies the rungs: the first nonzero rung becomes 1e-7, and on
    // this unit-scale matrix that already clears the gate (rcond ~ 5e-8)
    auto F2 = chol_jittered(A, 10.0);
    CHECK(F2.jitter_used == doctest::Approx(1e-7).epsilon(1e-12));
}

TEST_CASE("solve against a pinned 2x2 system") {
    Mat A(2, 2);
    A << 2, 1, 1, 2;
    auto F = chol_jittered(A, 1.0);
    CHECK(F.jitter_used == 0.0);
    Vec b = Vec::Ones(2);
    Vec x = chol_solve(F, b);
    CHECK(x[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(chol_logdet(F) == doctest::Approx(std::log(3.0)).epsilon(1e-14));

    Mat B = Mat::Identity(2, 2);
    Mat Ainv = chol_solve(F, B);
    CHECK(Ainv(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(Ainv(0, 1) == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("random spd systems solve to the eigensolver answer") {
    // second route: assemble A = Q diag(lam) Q' from an eigenbasis and solve
    // both through the factor and through the eigendecomposition.
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 2 + rng.uniform_int(6);
        Mat G(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) G(i, j) = rng.normal();
        Mat A = G * G.transpose() + 0.5 * static_cast<double>(n) * Mat::Identity(n, n);
        auto F = chol_jittered(A, 1.0);
        CHECK(F.jitter_used == 0.0);
        Vec b = rng.normal_vec(n);
        Vec x = chol_solve(F, b);

        Eigen::SelfAdjointEigenSolver<Mat> es(A);
        Vec x_ref = es.eigenvectors() *
                    (es.eigenvectors().transpose() * b).cwiseQuotient(es.eigenvalues());
        CHECK((x - x_ref).norm() <= 1e-9 * (1.0 + x_ref.norm()));

        double logdet_ref = es.eigenvalues().array().log().sum();
        CHECK(chol_logdet(F) == doctest::Approx(logdet_ref).epsilon(1e-10));
    }
}

TEST_CASE("shape and finiteness guards throw typed errors") {
    CHECK_THROWS_AS(chol_jittered(Mat::Ones(2, 3), 1.0), ArgumentError);
    Mat bad = Mat::Identity(2, 2);
    bad(0, 1) = std::nan("");
    CHECK_THROWS_AS(chol_jittered(bad, 1.0), NumericalError);
    auto F = chol_jittered(Mat::Identity(2, 2), 1.0);
    CHECK_THROWS_AS(chol_solve(F, Vec(Vec::Ones(3))), ArgumentError);
    auto F0 = chol_jittered(Mat(0, 0), 1.0);
    CHECK(F0.dim() == 0);
    CHECK(chol_solve(F0, Vec(0)).size() == 0);
}
