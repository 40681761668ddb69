#include "doctest.h"

#include <cmath>

#include "vnngp/errors.hpp"
#include "vnngp/kernel.hpp"
#include "vnngp/rng.hpp"
#include "vnngp/smallmat.hpp"

using namespace vnngp;

namespace {

Vec v1(double a) {
    Vec v(1);
    v << a;
    return v;
}

} // namespace

TEST_CASE("squared exponential pinned values") {
    auto p = KernelParams::make(KernelKind::SquaredExponential, v1(1.0), 1.0);
    CHECK(kernel_eval(p, v1(0.0), v1(0.0)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(kernel_eval(p, v1(0.0), v1(1.0)) ==
          doctest::Approx(0.6065306597126334).epsilon(1e-15));
    // outputscale multiplies, lengthscale rescales distance
    auto p2 = KernelParams::make(KernelKind::SquaredExponential, v1(2.0), 3.0);
    CHECK(kernel_eval(p2, v1(0.0), v1(2.0)) ==
          doctest::Approx(3.0 * 0.6065306597126334).epsilon(1e-13));
}

TEST_CASE("matern52 pinned values") {
    auto p = KernelParams::make(KernelKind::Matern52, v1(1.0), 1.0);
    CHECK(kernel_eval(p, v1(0.0), v1(0.0)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(kernel_eval(p, v1(0.0), v1(1.0)) ==
          doctest::Approx(0.5239941088318203).epsilon(1e-14));
    CHECK(kernel_eval(p, v1(0.0), v1(2.0)) ==
          doctest::Approx(0.13866021913850426).epsilon(1e-14));
}

TEST_CASE("ard lengthscales act per dimension") {
    Vec ls(2);
    ls << 1.0, 100.0;
    auto p = KernelParams::make(KernelKind::SquaredExponential, ls, 1.0);
    Vec a(2), b(2), c(2);
    a << 0, 0;
    b << 1, 0; // unit move along the short lengthscale
    c << 0, 1; // unit move along the long lengthscale
    double kb = kernel_eval(p, a, b);
    double kc = kernel_eval(p, a, c);
    CHECK(kb == doctest::Approx(0.6065306597126334).epsilon(1e-13));
    CHECK(kc > 0.9999);
    CHECK(kb < kc);
}

TEST_CASE("kernels decay monotonically with distance") {
    for (auto kind : {KernelKind::SquaredExponential, KernelKind::Matern52}) {
        auto p = KernelParams::make(kind, v1(1.7), 2.2);
        double prev = kernel_eval(p, v1(0.0), v1(0.0));
        for (double r = 0.25; r < 6.0; r += 0.25) {
            double k = kernel_eval(p, v1(0.0), v1(r));
            CHECK(k < prev);
            CHECK(k > 0.0);
            prev = k;
        }
    }
}

TEST_CASE("gram matrices are symmetric positive definite") {
    Rng rng(17);
    for (auto kind : {KernelKind::SquaredExponential, KernelKind::Matern52}) {
        Mat X(9, 2);
        for (int i = 0; i < X.size(); ++i) X(i / 2, i % 2) = 3.0 * rng.normal();
        Vec ls(2);
        ls << 0.8, 1.6;
        auto p = KernelParams::make(kind, ls, 1.3);
        Mat K = kernel_cross(p, X, X);
        CHECK((K - K.transpose()).cwiseAbs().maxCoeff() < 1e-14);
        Eigen::SelfAdjointEigenSolver<Mat> es(K);
        CHECK(es.eigenvalues().minCoeff() > -1e-10);
        for (int i = 0; i < K.rows(); ++i) {
            CHECK(K(i, i) == doctest::Approx(softplus(p.raw_outputscale)).epsilon(1e-13));
        }
    }
}

TEST_CASE("kernel_cross agrees with kernel_eval and handles empty inputs") {
    auto p = KernelParams::make(KernelKind::Matern52, v1(1.0), 1.0);
    Mat A(2, 1), B(3, 1);
    A << 0.0, 1.5;
    B << -1.0, 0.5, 2.0;
    Mat K = kernel_cross(p, A, B);
    CHECK(K.rows() == 2);
    CHECK(K.cols() == 3);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 3; ++b)
            CHECK(K(a, b) == doctest::Approx(kernel_eval(p, A.row(a), B.row(b))).epsilon(1e-15));
    CHECK(kernel_cross(p, Mat(0, 1), B).rows() == 0);
    CHECK(kernel_cross(p, A, Mat(0, 1)).cols() == 0);
}

TEST_CASE("raw-parameter gradients match finite differences") {
    Rng rng(5);
    for (auto kind : {KernelKind::SquaredExponential, KernelKind::Matern52}) {
        for (int trial = 0; trial < 8; ++trial) {
            int D = 1 + rng.uniform_int(3);
            Vec ls(D);
            for (int d = 0; d < D; ++d) ls[d] = 0.5 + rng.uniform() * 2.0;
            auto p = KernelParams::make(kind, ls, 0.4 + rng.uniform() * 2.0);
            Vec x = rng.normal_vec(D), x2 = rng.normal_vec(D);

            Vec grad = Vec::Zero(p.n_raw());
            kernel_grad_accumulate(p, x, x2, 1.0, grad);

            const double h = 1e-6;
            for (int r = 0; r < p.n_raw(); ++r) {
                auto eval_at = [&](double delta) {
                    KernelParams q = p;
                    if (r < D)
                        q.raw_lengthscales[r] += delta;
                    else
                        q.raw_outputscale += delta;
                    return kernel_eval(q, x, x2);
                };
                double fd = (eval_at(h) - eval_at(-h)) / (2 * h);
                CHECK(grad[r] == doctest::Approx(fd).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("gradient accumulation applies the weight and adds in place") {
    auto p = KernelParams::make(KernelKind::SquaredExponential, v1(1.0), 1.0);
    Vec g1 = Vec::Zero(2), g2 = Vec::Zero(2);
    kernel_grad_accumulate(p, v1(0.0), v1(1.0), 1.0, g1);
    kernel_grad_accumulate(p, v1(0.0), v1(1.0), 2.5, g2);
    kernel_grad_accumulate(p, v1(0.0), v1(1.0), -1.0, g2);
    CHECK(g2[0] == doctest::Approx(1.5 * g1[0]).epsilon(1e-13));
    CHECK(g2[1] == doctest::Approx(1.5 * g1[1]).epsilon(1e-13));
}

TEST_CASE("constructor and name parsing reject bad input") {
    CHECK_THROWS_AS(KernelParams::make(KernelKind::Matern52, Vec(0), 1.0), ArgumentError);
    CHECK_THROWS_AS(KernelParams::make(KernelKind::Matern52, v1(-1.0), 1.0), ArgumentError);
    CHECK_THROWS_AS(kernel_kind_from_string("cubic"), ArgumentError);
    CHECK(kernel_kind_from_string("se") == KernelKind::SquaredExponential);
    CHECK(kernel_kind_from_string("rbf") == KernelKind::SquaredExponential);
    CHECK(kernel_kind_from_string("matern52") == KernelKind::Matern52);
    CHECK(to_string(KernelKind::Matern52) == "matern52");
    auto p = KernelParams::make(KernelKind::SquaredExponential, v1(1.0), 1.0);
    CHECK_THROWS_AS(kernel_eval(p, Vec::Ones(2), v1(0.0)), ArgumentError);
}

TEST_CASE("constrained parameters round-trip through raw storage") {
    Vec ls(2);
    ls << 0.37, 4.2;
    auto p = KernelParams::make(KernelKind::Matern52, ls, 2.9);
    CHECK(p.lengthscales()[0] == doctest::Approx(0.37).epsilon(1e-12));
    CHECK(p.lengthscales()[1] == doctest::Approx(4.2).epsilon(1e-12));
    CHECK(p.outputscale() == doctest::Approx(2.9).epsilon(1e-12));
    CHECK(p.n_raw() == 3);
}
