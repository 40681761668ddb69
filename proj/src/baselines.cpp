#include "vnngp/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "vnngp/errors.hpp"
#include "vnngp/neighbors.hpp"

namespace vnngp {

namespace {

Mat gather_rows(const Mat& Z, const std::vector<int>& idx) {
    Mat out(static_cast<int>(idx.size()), Z.cols());
    for (size_t k = 0; k < idx.size(); ++k) out.row(static_cast<int>(k)) = Z.row(idx[k]);
    return out;
}

void check_subset(const std::vector<int>& subset, int m) {
    if (subset.empty()) throw ArgumentError("subset must be nonempty");
    for (size_t k = 0; k < subset.size(); ++k) {
        if (subset[k] < 0 || subset[k] >= m) throw ArgumentError("subset index out of range");
        if (k > 0 && subset[k] <= subset[k - 1])
            throw ArgumentError("subsets must be sorted and duplicate-free");
    }
}

} // namespace

// ---- exact GP ----

ExactPosterior exact_gp_posterior(const KernelParams& kp, const LikelihoodParams& lik,
                                  const Mat& X, const Vec& y) {
    if (lik.kind != LikelihoodKind::Gaussian)
        throw UnsupportedError("exact GP supports the Gaussian likelihood only");
    if (X.rows() == 0) throw ArgumentError("exact GP needs at least one observation");
    if (X.rows() > kExactGpCap)
        throw UnsupportedError("exact GP capped at " + std::to_string(kExactGpCap) +
                               " observations");
    if (y.size() != X.rows()) throw ArgumentError("X and y disagree on N");
    ExactPosterior post;
    post.X_train = X;
    post.noise = lik.noise();
    Mat A = kernel_cross(kp, X, X);
    A.diagonal().array() += post.noise;
    post.chol = chol_jittered(A, kp.outputscale());
    post.alpha = chol_solve(post.chol, y);
    return post;
}

GaussianMarginal exact_gp_predict(const ExactPosterior& post, const KernelParams& kp,
                                  const Vec& x_star) {
    const Vec k = kernel_cross(kp, post.X_train, x_star.transpose()).col(0);
    GaussianMarginal out;
    out.mean = k.dot(post.alpha);
    const Vec v = chol_solve(post.chol, k);
    out.variance = std::max(kernel_eval(kp, x_star, x_star) - k.dot(v), 0.0);
    return out;
}

double exact_log_marginal(const KernelParams& kp, double noise_raw, const Mat& X, const Vec& y,
                          Vec* grad) {
    const int n = static_cast<int>(X.rows());
    if (n == 0) throw ArgumentError("exact GP needs at least one observation");
    if (n > kExactGpCap) throw UnsupportedError("exact GP size cap exceeded");
    if (y.size() != n) throw ArgumentError("X and y disagree on N");
    const double noise = softplus(noise_raw);
    Mat A = kernel_cross(kp, X, X);
    A.diagonal().array() += noise;
    const CholFactor F = chol_jittered(A, kp.outputscale());
    const Vec alpha = chol_solve(F, y);
    const double logml =
        -0.5 * y.dot(alpha) - 0.5 * chol_logdet(F) - 0.5 * n * kLog2Pi;
    if (grad) {
        grad->setZero(kp.n_raw() + 1);
        const Mat Ainv = chol_solve(F, Mat(Mat::Identity(n, n)));
        const Mat W = 0.5 * (alpha * alpha.transpose() - Ainv);
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q)
                kernel_grad_accumulate(kp, X.row(p).transpose(), X.row(q).transpose(), W(p, q),
                                       grad->head(kp.n_raw()));
        (*grad)[kp.n_raw()] = W.trace() * sigmoid(noise_raw);
    }
    return logml;
}

// ---- SVGP ----

double svgp_kl_exact(const VariationalState& vs, const KernelParams& kp, const Mat& Z) {
    const int m = vs.size();
    if (Z.rows() != m) throw ArgumentError("state and inducing points disagree on M");
    if (m == 0) return 0.0;
    const CholFactor F = chol_jittered(kernel_cross(kp, Z, Z), kp.outputscale());
    const Mat Kinv = chol_solve(F, Mat(Mat::Identity(m, m)));
    const Vec km = chol_solve(F, vs.m);
    double acc = chol_logdet(F) - m + vs.m.dot(km);
    if (vs.has_fullrank()) {
        const Mat Lt = vs.fullrank_factor();
        for (int i = 0; i < m; ++i) acc -= 2.0 * std::log(Lt(i, i));
        acc += (Kinv * (Lt * Lt.transpose())).trace();
    } else {
        for (int k = 0; k < m; ++k) {
            const double sk = vs.s_at(k);
            acc += -std::log(sk) + Kinv(k, k) * sk;
        }
    }
    return 0.5 * acc;
}

ElboBreakdown svgp_elbo(const KernelParams& kp, const LikelihoodParams& lik,
                        const VariationalState& vs, const Mat& Z, const Mat& X, const Vec& y,
                        std::span<const int> data_batch, ElboGrad* grad) {
    const int m = vs.size();
    const int n = static_cast<int>(X.rows());
    if (Z.rows() != m) throw ArgumentError("state and inducing points disagree on M");
    if (y.size() != n) throw ArgumentError("X and y disagree on N");
    if (data_batch.empty()) throw ArgumentError("batch must be nonempty");
    for (int i : data_batch)
        if (i < 0 || i >= n) throw ArgumentError("data batch index out of range");
    if (vs.has_fullrank()) throw UnsupportedError("SVGP training path is mean-field only");

    if (grad) *grad = ElboGrad::zeros(kp.n_raw(), m);
    const CholFactor F = chol_jittered(kernel_cross(kp, Z, Z), kp.outputscale());
    const Vec s = vs.s();
    const Vec p = chol_solve(F, vs.m); // K^{-1} m
    const double floor = kVarFloorRel * kp.outputscale();

    ElboBreakdown out;
    out.scale_data = static_cast<double>(n) / static_cast<double>(data_batch.size());
    out.scale_kl = 1.0;
    out.data_batch.assign(data_batch.begin(), data_batch.end());

    Mat Kbar; // kernel adjoint for the Z-Z block, accumulated densely
    if (grad) Kbar = Mat::Zero(m, m);

    for (int i : data_batch) {
        const Vec xi = X.row(i).transpose();
        const Vec k = kernel_cross(kp, Z, xi.transpose()).col(0);
        const Vec a = chol_solve(F, k);
        const double k_self = kernel_eval(kp, xi, xi);
        GaussianMarginal q;
        q.mean = a.dot(vs.m);
        const double raw_v = k_self - k.dot(a) + a.array().square().matrix().dot(s);
        q.variance = std::max(raw_v, floor);
        EllGrad eg;
        out.data_term += expected_log_lik(lik, q, y[i], grad ? &eg : nullptr);
        if (!grad) continue;

        const double sc = out.scale_data;
        if (lik.has_trainable()) grad->d_lik_raw += sc * eg.d_raw;
        const double gv = raw_v > floor ? eg.d_var : 0.0;
        for (int kk = 0; kk < m; ++kk) {
            grad->d_m[kk] += sc * eg.d_mean * a[kk];
            grad->d_raw_s[kk] += sc * gv * a[kk] * a[kk] * sigmoid(vs.raw_s[kk]);
        }
        // adjoints of mu = k'p and v = k_self - k'a + a'Da with a = K^{-1}k
        const Vec w2 = chol_solve(F, Vec(s.cwiseProduct(a)));
        const Vec kbar = eg.d_mean * p - 2.0 * gv * a + 2.0 * gv * w2;
        for (int kk = 0; kk < m; ++kk)
            kernel_grad_accumulate(kp, Z.row(kk).transpose(), xi, sc * kbar[kk],
                                   grad->d_kernel_raw);
        kernel_grad_accumulate(kp, xi, xi, sc * gv, grad->d_kernel_raw);
        Kbar.noalias() += sc * (-eg.d_mean * a * p.transpose() + gv * a * a.transpose() -
                                2.0 * gv * w2 * a.transpose());
    }

    out.kl_term = svgp_kl_exact(vs, kp, Z);
    out.total = out.scale_data * out.data_term - out.kl_term;
    if (!grad) return out;

    const Mat Kinv = chol_solve(F, Mat(Mat::Identity(m, m)));
    for (int kk = 0; kk < m; ++kk) {
        grad->d_m[kk] -= p[kk];
        grad->d_raw_s[kk] -= 0.5 * (Kinv(kk, kk) - 1.0 / s[kk]) * sigmoid(vs.raw_s[kk]);
    }
    Kbar.noalias() -=
        0.5 * (Kinv - Kinv * s.asDiagonal() * Kinv - p * p.transpose());
    for (int a = 0; a < m; ++a)
        for (int c = 0; c < m; ++c)
            if (Kbar(a, c) != 0.0)
                kernel_grad_accumulate(kp, Z.row(a).transpose(), Z.row(c).transpose(), Kbar(a, c),
                                       grad->d_kernel_raw);
    return out;
}

GaussianMarginal svgp_predict_f(const KernelParams& kp, const VariationalState& vs, const Mat& Z,
                                const Vec& x_star) {
    return svgp_predict_batch(kp, vs, Z, x_star.transpose())[0];
}

std::vector<GaussianMarginal> svgp_predict_batch(const KernelParams& kp,
                                                 const VariationalState& vs, const Mat& Z,
                                                 const Mat& X_star) {
    const int m = vs.size();
    if (Z.rows() != m) throw ArgumentError("state and inducing points disagree on M");
    const CholFactor F = chol_jittered(kernel_cross(kp, Z, Z), kp.outputscale());
    const Vec s = vs.has_fullrank() ? Vec() : vs.s();
    const Mat Lt = vs.has_fullrank() ? vs.fullrank_factor() : Mat();
    std::vector<GaussianMarginal> out(X_star.rows());
    for (int i = 0; i < X_star.rows(); ++i) {
        const Vec xi = X_star.row(i).transpose();
        const Vec k = kernel_cross(kp, Z, xi.transpose()).col(0);
        const Vec a = chol_solve(F, k);
        GaussianMarginal q;
        q.mean = a.dot(vs.m);
        double v = kernel_eval(kp, xi, xi) - k.dot(a);
        if (vs.has_fullrank())
            v += (a.transpose() * Lt).squaredNorm();
        else
            v += a.array().square().matrix().dot(s);
        q.variance = std::max(v, 0.0);
        out[i] = q;
    }
    return out;
}

// ---- SWSGP ----

double kl_subset(const VariationalState& vs, const KernelParams& kp, const Mat& Z,
                 const std::vector<int>& subset) {
    check_subset(subset, vs.size());
    if (Z.rows() != vs.size()) throw ArgumentError("state and inducing points disagree on M");
    const int ns = static_cast<int>(subset.size());
    const Mat Zs = gather_rows(Z, subset);
    const CholFactor F = chol_jittered(kernel_cross(kp, Zs, Zs), kp.outputscale());
    Vec ms(ns);
    for (int k = 0; k < ns; ++k) ms[k] = vs.m[subset[k]];
    const Vec km = chol_solve(F, ms);
    double acc = chol_logdet(F) - ns + ms.dot(km);
    if (vs.has_fullrank()) {
        const Mat Lt = vs.fullrank_factor();
        Mat cov = Lt * Lt.transpose();
        Mat Sigma(ns, ns);
        for (int a = 0; a < ns; ++a)
            for (int c = 0; c < ns; ++c) Sigma(a, c) = cov(subset[a], subset[c]);
        const CholFactor Fs = chol_jittered(Sigma, 1.0);
        acc += -chol_logdet(Fs) + (chol_solve(F, Sigma)).trace();
    } else {
        const Mat Kinv = chol_solve(F, Mat(Mat::Identity(ns, ns)));
        for (int k = 0; k < ns; ++k) {
            const double sk = vs.s_at(subset[k]);
            acc += -std::log(sk) + Kinv(k, k) * sk;
        }
    }
    return 0.5 * acc;
}

ElboBreakdown swsgp_objective(const KernelParams& kp, const LikelihoodParams& lik,
                              const VariationalState& vs, const Mat& Z,
                              const std::vector<std::vector<int>>& data_nn, const Mat& X,
                              const Vec& y, std::span<const int> data_batch, ElboGrad* grad) {
    const int m = vs.size();
    const int n = static_cast<int>(X.rows());
    if (Z.rows() != m) throw ArgumentError("state and inducing points disagree on M");
    if (y.size() != n || static_cast<int>(data_nn.size()) != n)
        throw ArgumentError("data, targets and neighbor sets disagree on N");
    if (data_batch.empty()) throw ArgumentError("batch must be nonempty");
    for (int i : data_batch)
        if (i < 0 || i >= n) throw ArgumentError("data batch index out of range");
    if (vs.has_fullrank()) throw UnsupportedError("SWSGP training path is mean-field only");

    if (grad) *grad = ElboGrad::zeros(kp.n_raw(), m);
    const double floor = kVarFloorRel * kp.outputscale();

    ElboBreakdown out;
    out.scale_data = static_cast<double>(n) / static_cast<double>(data_batch.size());
    out.scale_kl = 1.0 / static_cast<double>(data_batch.size());
    out.data_batch.assign(data_batch.begin(), data_batch.end());

    for (int i : data_batch) {
        const auto& sub = data_nn[i];
        check_subset(sub, m);
        const int ns = static_cast<int>(sub.size());
        const Vec xi = X.row(i).transpose();
        const Mat Zs = gather_rows(Z, sub);
        const CholFactor F = chol_jittered(kernel_cross(kp, Zs, Zs), kp.outputscale());
        const Vec k = kernel_cross(kp, Zs, xi.transpose()).col(0);
        const Vec a = chol_solve(F, k);
        Vec ms(ns), ss(ns);
        for (int kk = 0; kk < ns; ++kk) {
            ms[kk] = vs.m[sub[kk]];
            ss[kk] = vs.s_at(sub[kk]);
        }
        const double k_self = kernel_eval(kp, xi, xi);
        GaussianMarginal q;
        q.mean = a.dot(ms);
        const double raw_v = k_self - k.dot(a) + a.array().square().matrix().dot(ss);
        q.variance = std::max(raw_v, floor);
        EllGrad eg;
        out.data_term += expected_log_lik(lik, q, y[i], grad ? &eg : nullptr);

        // subset KL
        const Vec pm = chol_solve(F, ms);
        const Mat Kinv = chol_solve(F, Mat(Mat::Identity(ns, ns)));
        double kl = chol_logdet(F) - ns + ms.dot(pm);
        for (int kk = 0; kk < ns; ++kk) kl += -std::log(ss[kk]) + Kinv(kk, kk) * ss[kk];
        kl *= 0.5;
        out.kl_term += kl;
        if (!grad) continue;

        const double sc = out.scale_data;
        const double sk = out.scale_kl;
        if (lik.has_trainable()) grad->d_lik_raw += sc * eg.d_raw;
        const double gv = raw_v > floor ? eg.d_var : 0.0;
        const Vec w2 = chol_solve(F, Vec(ss.cwiseProduct(a)));
        const Vec kbar = eg.d_mean * pm - 2.0 * gv * a + 2.0 * gv * w2;
        Mat Kbar = sc * (-eg.d_mean * a * pm.transpose() + gv * a * a.transpose() -
                         2.0 * gv * w2 * a.transpose());
        // KL adjoints, entering the objective with weight -1/N_b
        Kbar.noalias() -=
            sk * 0.5 * (Kinv - Kinv * ss.asDiagonal() * Kinv - pm * pm.transpose());
        for (int kk = 0; kk < ns; ++kk) {
            const int jk = sub[kk];
            grad->d_m[jk] += sc * eg.d_mean * a[kk] - sk * pm[kk];
            grad->d_raw_s[jk] += (sc * gv * a[kk] * a[kk] -
                                  sk * 0.5 * (Kinv(kk, kk) - 1.0 / ss[kk])) *
                                 sigmoid(vs.raw_s[jk]);
            kernel_grad_accumulate(kp, Zs.row(kk).transpose(), xi, sc * kbar[kk],
                                   grad->d_kernel_raw);
            for (int cc = 0; cc < ns; ++cc)
                if (Kbar(kk, cc) != 0.0)
                    kernel_grad_accumulate(kp, Zs.row(kk).transpose(), Zs.row(cc).transpose(),
                                           Kbar(kk, cc), grad->d_kernel_raw);
        }
        kernel_grad_accumulate(kp, xi, xi, sc * gv, grad->d_kernel_raw);
    }
    out.total = out.scale_data * out.data_term - out.scale_kl * out.kl_term;
    return out;
}

GaussianMarginal swsgp_predict_f(const KernelParams& kp, const VariationalState& vs, const Mat& Z,
                                 int K, const Vec& x_star) {
    const auto sub = data_nn_for_point(Z, x_star, K);
    if (sub.empty()) return {0.0, kernel_eval(kp, x_star, x_star)};
    const int ns = static_cast<int>(sub.size());
    const Mat Zs = gather_rows(Z, sub);
    const CholFactor F = chol_jittered(kernel_cross(kp, Zs, Zs), kp.outputscale());
    const Vec k = kernel_cross(kp, Zs, x_star.transpose()).col(0);
    const Vec a = chol_solve(F, k);
    Vec ms(ns), ss(ns);
    for (int kk = 0; kk < ns; ++kk) {
        ms[kk] = vs.m[sub[kk]];
        ss[kk] = vs.s_at(sub[kk]);
    }
    GaussianMarginal q;
    q.mean = a.dot(ms);
    q.variance = std::max(
        kernel_eval(kp, x_star, x_star) - k.dot(a) + a.array().square().matrix().dot(ss), 0.0);
    return q;
}

} // namespace vnngp
