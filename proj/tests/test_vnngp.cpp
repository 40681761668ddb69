#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "vnngp/baselines.hpp"
#include "vnngp/errors.hpp"
#include "vnngp/rng.hpp"
#include "vnngp/training.hpp"
#include "vnngp/vnngp.hpp"

using namespace vnngp;

namespace {

Mat col(std::initializer_list<double> vals) {
    Mat Z(static_cast<int>(vals.size()), 1);
    int i = 0;
    for (double v : vals) Z(i++, 0) = v;
    return Z;
}

Vec v1(double a) {
    Vec v(1);
    v << a;
    return v;
}

// spread-out random points keep every neighbor block on the zero-jitter rung
Mat spread_points(Rng& rng, int n, int d, double gap = 1.0) {
    Mat X(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) X(i, j) = gap * (i + rng.uniform());
    return X;
}

// dense KL(N(m, S) || N(0, K)) straight from the formula
double dense_gauss_kl(const Vec& m, const Mat& S, const Mat& K) {
    Eigen::LLT<Mat> llt(K);
    Mat Kinv = llt.solve(Mat::Identity(K.rows(), K.cols()));
    double logdet_K = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
    double logdet_S = std::log(S.determinant());
    return 0.5 * ((Kinv * S).trace() + m.dot(Kinv * m) -
                  static_cast<double>(K.rows()) + logdet_K - logdet_S);
}

} // namespace

TEST_CASE("conditional moments: empty set gives the prior, one neighbor pinned") {
    auto kp = KernelParams::make(KernelKind::SquaredExponential, v1(1.0), 1.0);
    Mat Z = col({0.0, 1.0});

    auto cm0 = conditional_moments(kp, Z, {}, Z.row(0));
    CHECK(cm0.b.size() == 0);
    CHECK(cm0.f_cond == doctest::Approx(1.0).epsilon(1e-14));

    // b = k(0,1)/k(0,0) = e^{-1/2}; f = 1 - e^{-1}
    auto cm1 = conditional_moments(kp, Z, {0}, Z.row(1));
    REQUIRE(cm1.b.size() == 1);
    CHECK(cm1.b[0] == doctest::Approx(0.6065306597126334).epsilon(1e-13));
    CHECK(cm1.f_cond == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-13));
}

TEST_CASE("conditional moments agree with a dense solve oracle") {
    Rng rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        int m = 3 + rng.uniform_int(8);
        int d = 1 + rng.uniform_int(2);
        Mat Z = spread_points(rng, m, d);
        auto kp = KernelParams::make(
            rng.uniform() < 0.5 ? KernelKind::SquaredExponential : KernelKind::Matern52,
            Vec::Constant(d, 0.8 + rng.uniform()), 0.5 + rng.uniform());
        int j = 1 + rng.uniform_int(m - 1);
        std::vector<int> nbrs;
        for (int p = 0; p < j; ++p)
            if (rng.uniform() < 0.7) nbrs.push_back(p);
        if (nbrs.empty()) nbrs.push_back(0);

        auto cm = conditional_moments(kp, Z, nbrs, Z.row(j));

        int ns = static_cast<int>(nbrs.size());
        Mat Knn(ns, ns);
        Vec kn(ns);
        for (int a = 0; a < ns; ++a) {
            kn[a] = kernel_eval(kp, Z.row(nbrs[a]), Z.row(j));
            for (int b = 0; b < ns; ++b)
                Knn(a, b) = kernel_eval(kp, Z.row(nbrs[a]), Z.row(nbrs[b]));
        }
        Vec b_ref = Knn.llt().solve(kn);
        double f_ref = kernel_eval(kp, Z.row(j), Z.row(j)) - kn.dot(b_ref);
        CHECK((cm.b - b_ref).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(cm.f_cond == doctest::Approx(f_ref).epsilon(1e-8));
        CHECK(cm.f_cond >= 0.0);
    }
}

TEST_CASE("marginal of q(f) combines neighbor means and variances") {
    VariationalState vs = VariationalState::from_meanfield(col({2.0, -1.0}).col(0),
                                                           col({0.5, 2.0}).col(0));
    ConditionalMoments cm;
    cm.b = col({0.5, 0.25}).col(0);
    cm.f_cond = 0.3;
    std::vector<int> nbrs = {0, 1};
    auto q = q_f_marginal(vs, cm, nbrs, 1.0);
    CHECK(q.mean == doctest::Approx(0.5 * 2.0 + 0.25 * -1.0).epsilon(1e-13));
    CHECK(q.variance ==
          doctest::Approx(0.3 + 0.25 * 0.5 + 0.0625 * 2.0).epsilon(1e-13));

    ConditionalMoments prior;
    prior.f_cond = 1.7;
    auto q0 = q_f_marginal(vs, prior, {}, 1.7);
    CHECK(q0.mean == 0.0);
    CHECK(q0.variance == doctest::Approx(1.7).epsilon(1e-14));
}

TEST_CASE("kl terms pinned against hand evaluation") {
    // no neighbors, prior N(0, 1), q = N(1, 1): 1/2 [0 - 0 - 1 + (1 + 1)] = 0.5
    VariationalState vs = VariationalState::from_meanfield(v1(1.0), v1(1.0));
    ConditionalMoments cm;
    cm.f_cond = 1.0;
    CHECK(kl_meanfield_term(vs, cm, 0, {}, 0.0) == doctest::Approx(0.5).epsilon(1e-13));

    // one neighbor carrying the same mean: quadratic term is s_j + b^2 s_n
    VariationalState vs2 = VariationalState::from_meanfield(col({2.0, 2.0}).col(0),
                                                            col({1.0, 1.0}).col(0));
    ConditionalMoments cm2;
    cm2.b = v1(1.0);
    cm2.f_cond = 1.0;
    CHECK(kl_meanfield_term(vs2, cm2, 1, {0}, 0.0) == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("factorized kl at full neighborhoods equals the dense gaussian kl") {
    Rng rng(33);
    for (int trial = 0; trial < 15; ++trial) {
        int M = 4 + rng.uniform_int(9);
        int d = 1 + rng.uniform_int(2);
        Mat Z = spread_points(rng, M, d);
        auto kp = KernelParams::make(KernelKind::Matern52, Vec::Constant(d, 1.1), 1.4);
        auto idx = build_inducing_nn(Z, M - 1);

        Vec m = rng.normal_vec(M);
        Vec s(M);
        for (int j = 0; j < M; ++j) s[j] = 0.2 + rng.uniform() * 2.0;
        auto vs = VariationalState::from_meanfield(m, s);

        double kl_sparse = kl_meanfield_total(vs, kp, Z, idx);
        Mat K = kernel_cross(kp, Z, Z);
        double kl_dense = dense_gauss_kl(m, Mat(s.asDiagonal()), K);
        CHECK(kl_sparse == doctest::Approx(kl_dense).epsilon(1e-8));

        // and agrees with the dense-route kl used by the global baseline
        CHECK(kl_sparse == doctest::Approx(svgp_kl_exact(vs, kp, Z)).epsilon(1e-8));
    }
}

TEST_CASE("factorized kl is invariant to the ordering at full neighborhoods") {
    Rng rng(90);
    int M = 9;
    Mat Z = spread_points(rng, M, 2);
    auto kp = KernelParams::make(KernelKind::SquaredExponential, Vec::Constant(2, 1.3), 1.0);
    Vec m = rng.normal_vec(M);
    Vec s = Vec::Constant(M, 0.7);

    double ref = 0.0;
    for (int o = 0; o < 4; ++o) {
        auto ord = Ordering::random(M, 100 + o);
        Mat Zo = apply_ordering(Z, ord);
        Vec mo(M), so(M);
        for (int p = 0; p < M; ++p) {
            mo[p] = m[ord.perm[p]];
            so[p] = s[ord.perm[p]];
        }
        auto vso = VariationalState::from_meanfield(mo, so);
        auto idx = build_inducing_nn(Zo, M - 1);
        double kl = kl_meanfield_total(vso, kp, Zo, idx);
        if (o == 0)
            ref = kl;
        else
            CHECK(kl == doctest::Approx(ref).epsilon(1e-8));
    }
}

TEST_CASE("elbo breakdown ties total to its scaled parts") {
    Rng rng(44);
    int N = 12, M = 6, K = 3;
    Mat X = spread_points(rng, N, 1, 0.7);
    Mat Z = spread_points(rng, M, 1, 1.3);
    auto kp = KernelParams::make(KernelKind::Matern52, v1(1.2), 1.0);
    auto lik = LikelihoodParams::gaussian(0.4);
    auto idx = build_inducing_nn(Z, K);
    build_data_nn(idx, X, Z);
    Vec y = rng.normal_vec(N);
    auto vs = VariationalState::from_meanfield(rng.normal_vec(M), Vec::Constant(M, 0.8));

    auto full = elbo_full(kp, lik, vs, Z, idx, X, y);
    CHECK(full.scale_data == 1.0);
    CHECK(full.scale_kl == 1.0);
    CHECK(full.total ==
          doctest::Approx(full.data_term - full.kl_term).epsilon(1e-12));
    CHECK(full.data_batch.empty());
    CHECK(full.ip_batch.empty());

    // data term is literally the sum of per-point expected log-liks
    double data_ref = 0.0;
    for (int i = 0; i < N; ++i) {
        auto cm = conditional_moments(kp, Z, idx.data_nn[i], X.row(i));
        auto q = q_f_marginal(vs, cm, idx.data_nn[i], kernel_eval(kp, X.row(i), X.row(i)));
        data_ref += expected_log_lik(lik, q, y[i]);
    }
    CHECK(full.data_term == doctest::Approx(data_ref).epsilon(1e-10));
    CHECK(full.kl_term == doctest::Approx(kl_meanfield_total(vs, kp, Z, idx)).epsilon(1e-12));

    std::vector<int> db = {0, 3, 7}, ib = {1, 4};
    auto st = elbo_stochastic(kp, lik, vs, Z, idx, X, y, db, ib);
    CHECK(st.scale_data == doctest::Approx(12.0 / 3.0));
    CHECK(st.scale_kl == doctest::Approx(6.0 / 2.0));
    CHECK(st.total == doctest::Approx(st.scale_data * st.data_term -
                                      st.scale_kl * st.kl_term).epsilon(1e-12));
}

TEST_CASE("minibatch estimator averages back to the full objective") {
    Rng rng(58);
    int N = 4, M = 4, K = 2;
    Mat X = spread_points(rng, N, 1);
    Mat Z = spread_points(rng, M, 1);
    auto kp = KernelParams::make(KernelKind::SquaredExponential, v1(1.0), 1.0);
    auto lik = LikelihoodParams::gaussian(0.5);
    auto idx = build_inducing_nn(Z, K);
    build_data_nn(idx, X, Z);
    Vec y = rng.normal_vec(N);
    auto vs = VariationalState::from_meanfield(rng.normal_vec(M), Vec::Constant(M, 1.0));

    double full = elbo_full(kp, lik, vs, Z, idx, X, y).total;

    std::vector<std::vector<int>> pairs;
    for (int a = 0; a < N; ++a)
        for (int b = a + 1; b < N; ++b) pairs.push_back({a, b});
    double acc = 0.0;
    int count = 0;
    for (const auto& db : pairs) {
        for (const auto& ib : pairs) {
            acc += elbo_stochastic(kp, lik, vs, Z, idx, X, y, db, ib).total;
            ++count;
        }
    }
    CHECK(count == 36);
    CHECK(acc / count == doctest::Approx(full).epsilon(1e-12));
}

TEST_CASE("elbo gradients match finite differences on a small instance") {
    Rng rng(66);
    for (auto likkind : {LikelihoodKind::Gaussian, LikelihoodKind::Bernoulli}) {
        int N = 5, M = 4, K = 2;
        Mat X = spread_points(rng, N, 1, 0.9);
        Mat Z = spread_points(rng, M, 1, 1.1);
        auto kp = KernelParams::make(KernelKind::Matern52, v1(1.3), 1.5);
        auto lik = likkind == LikelihoodKind::Gaussian ? LikelihoodParams::gaussian(0.4)
                                                       : LikelihoodParams::bernoulli();
        auto idx = build_inducing_nn(Z, K);
        build_data_nn(idx, X, Z);
        Vec y(N);
        for (int i = 0; i < N; ++i)
            y[i] = likkind == LikelihoodKind::Gaussian ? rng.normal()
                                                       : (rng.uniform() < 0.5 ? -1.0 : 1.0);
        auto vs = VariationalState::from_meanfield(rng.normal_vec(M),
                                                   Vec::Constant(M, 0.9));

        auto lay = ParamLayout::infer(kp, lik, vs);
        Vec theta = flatten(lay, kp, lik, vs);

        auto value_at = [&](const Vec& th) {
            KernelParams kp2 = kp;
            LikelihoodParams lik2 = lik;
            VariationalState vs2 = vs;
            unflatten(lay, th, kp2, lik2, vs2);
            return elbo_full(kp2, lik2, vs2, Z, idx, X, y).total;
        };

        ElboGrad g = ElboGrad::zeros(kp.n_raw(), M);
        elbo_full(kp, lik, vs, Z, idx, X, y, &g);
        Vec analytic(lay.total());
        analytic << g.d_kernel_raw,
            (lay.n_lik ? Vec::Constant(1, g.d_lik_raw) : Vec(0)), g.d_m, g.d_raw_s;

        Vec fd = fd_gradient(value_at, theta);
        for (int i = 0; i < lay.total(); ++i) {
            double denom = std::max(std::abs(fd[i]), 1e-3);
            INFO("param ", lay.name_of(i), " analytic ", analytic[i], " fd ", fd[i]);
            CHECK(std::abs(analytic[i] - fd[i]) / denom < 1e-5);
        }
    }
}

TEST_CASE("prediction collapses onto the variational marginal at an inducing point") {
    Rng rng(71);
    int M = 6;
    Mat Z = spread_points(rng, M, 1, 1.4);
    auto kp = KernelParams::make(KernelKind::SquaredExponential, v1(1.0), 1.2);
    auto lik = LikelihoodParams::gaussian(0.3);
    Vec m = rng.normal_vec(M);
    Vec s(M);
    for (int j = 0; j < M; ++j) s[j] = 0.2 + rng.uniform();
    auto vs = VariationalState::from_meanfield(m, s);

    int j = 3;
    auto out = predict_point(kp, lik, vs, Z, 3, Z.row(j));
    CHECK(out.f.mean == doctest::Approx(m[j]).epsilon(1e-7));
    CHECK(out.f.variance == doctest::Approx(s[j]).epsilon(1e-6));
    CHECK(out.y_mean == doctest::Approx(out.f.mean).epsilon(1e-13));
    CHECK(out.y_var == doctest::Approx(out.f.variance + 0.3).epsilon(1e-7));

    // far from every inducing point the prior reasserts itself
    auto far = predict_point(kp, lik, vs, Z, 3, v1(1e4));
    CHECK(std::abs(far.f.mean) < 1e-8);
    CHECK(far.f.variance == doctest::Approx(1.2).epsilon(1e-8));
}

TEST_CASE("precision factor rows keep the promised sparsity and values") {
    Rng rng(83);
    int M = 10;
    Mat Z = spread_points(rng, M, 1);
    auto kp = KernelParams::make(KernelKind::SquaredExponential, v1(1.5), 1.0);

    for (int K : {1, 3, M - 1}) {
        auto idx = build_inducing_nn(Z, K);
        for (int j = 0; j < M; ++j) {
            auto row = precision_cholesky_row(kp, Z, idx, j);
            CHECK(static_cast<int>(row.cols.size()) <= K + 1);
            CHECK(row.cols.back() == j);
            CHECK(std::is_sorted(row.cols.begin(), row.cols.end()));
            auto cm = conditional_moments(kp, Z, idx.inducing_nn[j], Z.row(j));
            double inv_sqrt_f = 1.0 / std::sqrt(cm.f_cond);
            CHECK(row.vals[row.vals.size() - 1] ==
                  doctest::Approx(inv_sqrt_f).epsilon(1e-12));
            for (size_t a = 0; a + 1 < row.cols.size(); ++a) {
                CHECK(row.vals[a] == doctest::Approx(-inv_sqrt_f * cm.b[a]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("assembled factor reproduces the dense precision at full neighborhoods") {
    Rng rng(84);
    int M = 12;
    Mat Z = spread_points(rng, M, 2);
    auto kp = KernelParams::make(KernelKind::Matern52, Vec::Constant(2, 1.2), 1.1);
    auto idx = build_inducing_nn(Z, M - 1);
    Mat L = assemble_precision_cholesky(kp, Z, idx);

    Mat K = kernel_cross(kp, Z, Z);
    Eigen::LLT<Mat> llt(K);
    Mat Kinv = llt.solve(Mat::Identity(M, M));
    double rel = (L.transpose() * L - Kinv).norm() / Kinv.norm();
    CHECK(rel < 1e-8);

    // independent factor oracle: T = inv(chol(K).L) is the unique lower
    // triangular factor with positive diagonal satisfying T'T = K^{-1}
    Mat T = Mat(llt.matrixL())
                .triangularView<Eigen::Lower>()
                .solve(Mat::Identity(M, M));
    CHECK((L - T).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("full-rank kl through sparse rows matches the dense formula") {
    Rng rng(85);
    for (int trial = 0; trial < 10; ++trial) {
        int M = 5 + rng.uniform_int(4);
        Mat Z = spread_points(rng, M, 1);
        auto kp = KernelParams::make(KernelKind::SquaredExponential, v1(1.4), 1.0);
        auto idx = build_inducing_nn(Z, M - 1);
        Mat K = kernel_cross(kp, Z, Z);

        VariationalState vs = VariationalState::init_meanfield(M);
        vs.m = rng.normal_vec(M);
        Mat G(M, M);
        for (int i = 0; i < M * M; ++i) G(i / M, i % M) = 0.4 * rng.normal();
        Mat Ltilde = Mat(G.triangularView<Eigen::StrictlyLower>());
        for (int j = 0; j < M; ++j) Ltilde(j, j) = 0.3 + rng.uniform();
        vs.set_fullrank_from_factor(Ltilde);

        double kl = kl_fullrank(vs, kp, Z, idx);
        double ref = dense_gauss_kl(vs.m, Ltilde * Ltilde.transpose(), K);
        CHECK(kl == doctest::Approx(ref).epsilon(1e-8));
    }
}

TEST_CASE("full-rank kl vanishes when q equals the prior") {
    Rng rng(86);
    int M = 7;
    Mat Z = spread_points(rng, M, 1);
    auto kp = KernelParams::make(KernelKind::Matern52, v1(1.0), 1.3);
    auto idx = build_inducing_nn(Z, M - 1);
    Mat K = kernel_cross(kp, Z, Z);

    VariationalState vs = VariationalState::init_meanfield(M);
    vs.set_fullrank_from_factor(Mat(Eigen::LLT<Mat>(K).matrixL()));
    CHECK(std::abs(kl_fullrank(vs, kp, Z, idx)) < 1e-8);
}

TEST_CASE("diagonal full-rank factor collapses to the mean-field kl") {
    Rng rng(87);
    int M = 6;
    Mat Z = spread_points(rng, M, 1);
    auto kp = KernelParams::make(KernelKind::SquaredExponential, v1(1.0), 1.0);
    auto idx = build_inducing_nn(Z, M - 1);

    Vec m = rng.normal_vec(M);
    Vec s(M);
    for (int j = 0; j < M; ++j) s[j] = 0.3 + rng.uniform();
    auto vs_mf = VariationalState::from_meanfield(m, s);

    VariationalState vs_fr = VariationalState::init_meanfield(M);
    vs_fr.m = m;
    vs_fr.set_fullrank_from_factor(Mat(s.cwiseSqrt().asDiagonal()));

    CHECK(kl_fullrank(vs_fr, kp, Z, idx) ==
          doctest::Approx(kl_meanfield_total(vs_mf, kp, Z, idx)).epsilon(1e-9));
}

TEST_CASE("moment cache mirrors the direct computation") {
    Rng rng(88);
    int N = 8, M = 5, K = 2;
    Mat X = spread_points(rng, N, 1, 0.8);
    Mat Z = spread_points(rng, M, 1, 1.2);
    auto kp = KernelParams::make(KernelKind::Matern52, v1(1.0), 1.0);
    auto idx = build_inducing_nn(Z, K);
    build_data_nn(idx, X, Z);
    auto cache = build_moment_cache(kp, Z, idx, X);
    REQUIRE(cache.data_cm.size() == static_cast<size_t>(N));
    REQUIRE(cache.ind_cm.size() == static_cast<size_t>(M));
    for (int i = 0; i < N; ++i) {
        auto cm = conditional_moments(kp, Z, idx.data_nn[i], X.row(i));
        CHECK((cache.data_cm[i].b - cm.b).cwiseAbs().maxCoeff() == 0.0);
        CHECK(cache.data_cm[i].f_cond == cm.f_cond);
        CHECK(cache.data_kself[i] ==
              doctest::Approx(kernel_eval(kp, X.row(i), X.row(i))).epsilon(1e-14));
    }
    for (int j = 0; j < M; ++j) {
        auto cm = conditional_moments(kp, Z, idx.inducing_nn[j], Z.row(j));
        CHECK(cache.ind_cm[j].f_cond == cm.f_cond);
    }
}

TEST_CASE("malformed neighbor sets and unsupported states throw typed errors") {
    auto kp = KernelParams::make(KernelKind::SquaredExponential, v1(1.0), 1.0);
    Mat Z = col({0.0, 2.0, 4.0});
    CHECK_THROWS_AS(conditional_moments(kp, Z, {2, 1}, Z.row(0)), ArgumentError);
    CHECK_THROWS_AS(conditional_moments(kp, Z, {1, 1}, Z.row(0)), ArgumentError);
    CHECK_THROWS_AS(conditional_moments(kp, Z, {3}, Z.row(0)), ArgumentError);

    // the training objective is mean-field only; a full-rank state is refused
    auto idx = build_inducing_nn(Z, 1);
    build_data_nn(idx, Z, Z);
    auto lik = LikelihoodParams::gaussian(0.5);
    VariationalState vs = VariationalState::init_meanfield(3);
    vs.set_fullrank_from_factor(Mat::Identity(3, 3));
    Vec y = Vec::Zero(3);
    CHECK_THROWS_AS(elbo_full(kp, lik, vs, Z, idx, Z, y), UnsupportedError);

    // batches must be nonempty and in range
    VariationalState ok = VariationalState::init_meanfield(3);
    std::vector<int> empty;
    std::vector<int> good = {0};
    std::vector<int> bad = {7};
    CHECK_THROWS_AS(elbo_stochastic(kp, lik, ok, Z, idx, Z, y, empty, good), ArgumentError);
    CHECK_THROWS_AS(elbo_stochastic(kp, lik, ok, Z, idx, Z, y, good, bad), ArgumentError);
}

TEST_CASE("variational state round-trips constrained variances") {
    auto vs = VariationalState::init_meanfield(4);
    CHECK(vs.m.norm() == 0.0);
    CHECK(vs.s().isApprox(Vec::Ones(4), 1e-12));
    CHECK(!vs.has_fullrank());

    Vec s(2);
    s << 0.05, 3.0;
    auto vs2 = VariationalState::from_meanfield(Vec::Zero(2), s);
    CHECK(vs2.s_at(0) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(vs2.s_at(1) == doctest::Approx(3.0).epsilon(1e-12));

    Mat Lt(2, 2);
    Lt << 0.7, 0.0, -0.3, 1.2;
    vs2.set_fullrank_from_factor(Lt);
    CHECK(vs2.has_fullrank());
    CHECK(vs2.fullrank_factor().isApprox(Lt, 1e-10));
}
