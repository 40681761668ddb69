#include "vnngp/vnngp.hpp"

#include <algorithm>
#include <cmath>

#include "vnngp/errors.hpp"
#include "vnngp/smallmat.hpp"

namespace vnngp {

// ---- variational state ----

VariationalState VariationalState::init_meanfield(int M) {
    if (M < 0) throw ArgumentError("variational size must be nonnegative");
    VariationalState vs;
    vs.m = Vec::Zero(M);
    vs.raw_s = Vec::Constant(M, inv_softplus(1.0));
    return vs;
}

VariationalState VariationalState::from_meanfield(const Vec& m, const Vec& s) {
    if (m.size() != s.size()) throw ArgumentError("mean/variance size mismatch");
    VariationalState vs;
    vs.m = m;
    vs.raw_s.resize(s.size());
    for (int i = 0; i < s.size(); ++i) {
        if (!(s[i] > 0.0) || !std::isfinite(s[i]))
            throw ArgumentError("variational variances must be positive");
        vs.raw_s[i] = inv_softplus(s[i]);
    }
    return vs;
}

Vec VariationalState::s() const {
    Vec out(raw_s.size());
    for (int i = 0; i < raw_s.size(); ++i) out[i] = softplus(raw_s[i]);
    return out;
}

Mat VariationalState::fullrank_factor() const {
    if (!fullrank_raw) throw ArgumentError("state has no full-rank factor");
    const Mat& raw = *fullrank_raw;
    Mat L = raw.template triangularView<Eigen::StrictlyLower>();
    for (int i = 0; i < raw.rows(); ++i) L(i, i) = softplus(raw(i, i));
    return L;
}

void VariationalState::set_fullrank_from_factor(const Mat& Ltilde) {
    if (Ltilde.rows() != m.size() || Ltilde.cols() != m.size())
        throw ArgumentError("full-rank factor size mismatch");
    Mat raw = Ltilde.template triangularView<Eigen::StrictlyLower>();
    for (int i = 0; i < Ltilde.rows(); ++i) {
        if (!(Ltilde(i, i) > 0.0) || !std::isfinite(Ltilde(i, i)))
            throw ArgumentError("full-rank factor diagonal must be positive");
        raw(i, i) = inv_softplus(Ltilde(i, i));
    }
    fullrank_raw = std::move(raw);
}

ElboGrad ElboGrad::zeros(int n_kernel_raw, int M) {
    ElboGrad g;
    g.d_kernel_raw = Vec::Zero(n_kernel_raw);
    g.d_m = Vec::Zero(M);
    g.d_raw_s = Vec::Zero(M);
    return g;
}

// ---- conditional moments ----

namespace {

void check_neighbor_set(const std::vector<int>& nbrs, int m) {
    for (size_t k = 0; k < nbrs.size(); ++k) {
        if (nbrs[k] < 0 || nbrs[k] >= m)
            throw ArgumentError("neighbor index out of range");
        if (k > 0 && nbrs[k] <= nbrs[k - 1])
            throw ArgumentError("neighbor sets must be sorted and duplicate-free");
    }
}

Mat gather_rows(const Mat& Z, const std::vector<int>& idx) {
    Mat out(static_cast<int>(idx.size()), Z.cols());
    for (size_t k = 0; k < idx.size(); ++k) out.row(static_cast<int>(k)) = Z.row(idx[k]);
    return out;
}

// Everything a term gradient needs to push adjoints back to kernel raws.
struct MomentWork {
    ConditionalMoments cm;
    CholFactor chol;
    Vec k_n;
    double k_self = 0.0;
    bool clamped = false; // f hit the [0, k_self + jitter] clamp
};

MomentWork conditional_moments_work(const KernelParams& kp, const Mat& Zord,
                                    const std::vector<int>& nbrs, const Vec& target) {
    if (Zord.rows() > 0 && Zord.cols() != target.size())
        throw ArgumentError("target dimension does not match inducing points");
    check_neighbor_set(nbrs, static_cast<int>(Zord.rows()));
    MomentWork w;
    w.k_self = kernel_eval(kp, target, target);
    if (nbrs.empty()) {
        w.cm.b = Vec();
        w.cm.f_cond = w.k_self;
        return w;
    }
    const Mat Zn = gather_rows(Zord, nbrs);
    const Mat Knn = kernel_cross(kp, Zn, Zn);
    w.k_n = kernel_cross(kp, Zn, target.transpose()).col(0);
    w.chol = chol_jittered(Knn, kp.outputscale());
    w.cm.b = chol_solve(w.chol, w.k_n);
    const double upper = w.k_self + w.chol.jitter_used;
    double f = upper - w.k_n.dot(w.cm.b);
    if (f < 0.0 || f > upper) {
        f = std::clamp(f, 0.0, upper);
        w.clamped = true;
    }
    w.cm.f_cond = f;
    return w;
}

} // namespace

ConditionalMoments conditional_moments(const KernelParams& kp, const Mat& Zord,
                                       const std::vector<int>& nbrs, const Vec& target) {
    return conditional_moments_work(kp, Zord, nbrs, target).cm;
}

GaussianMarginal q_f_marginal(const VariationalState& vs, const ConditionalMoments& cm,
                              const std::vector<int>& nbrs, double k_self) {
    if (nbrs.empty()) return {0.0, k_self};
    const double floor = kVarFloorRel * k_self;
    GaussianMarginal q;
    q.variance = std::max(cm.f_cond, floor);
    for (size_t k = 0; k < nbrs.size(); ++k) {
        const int j = nbrs[k];
        q.mean += cm.b[static_cast<int>(k)] * vs.m[j];
        q.variance += cm.b[static_cast<int>(k)] * cm.b[static_cast<int>(k)] * vs.s_at(j);
    }
    return q;
}

GaussianMarginal q_f_marginal_fullrank(const VariationalState& vs, const ConditionalMoments& cm,
                                       const std::vector<int>& nbrs, double k_self) {
    if (nbrs.empty()) return {0.0, k_self};
    const Mat Lt = vs.fullrank_factor();
    const double floor = kVarFloorRel * k_self;
    GaussianMarginal q;
    q.variance = std::max(cm.f_cond, floor);
    Eigen::RowVectorXd u = Eigen::RowVectorXd::Zero(Lt.cols());
    for (size_t k = 0; k < nbrs.size(); ++k) {
        q.mean += cm.b[static_cast<int>(k)] * vs.m[nbrs[k]];
        u += cm.b[static_cast<int>(k)] * Lt.row(nbrs[k]);
    }
    q.variance += u.squaredNorm();
    return q;
}

// ---- KL ----

double kl_meanfield_term(const VariationalState& vs, const ConditionalMoments& cm, int j,
                         const std::vector<int>& nbrs, double var_floor) {
    if (j < 0 || j >= vs.size()) throw ArgumentError("inducing index out of range");
    const double f = std::max(cm.f_cond, var_floor);
    if (!(f > 0.0))
        throw NumericalError("conditional variance not positive at inducing index " +
                             std::to_string(j));
    const double sj = vs.s_at(j);
    double e = vs.m[j];
    double quad = sj;
    for (size_t k = 0; k < nbrs.size(); ++k) {
        const double bk = cm.b[static_cast<int>(k)];
        e -= bk * vs.m[nbrs[k]];
        quad += bk * bk * vs.s_at(nbrs[k]);
    }
    quad += e * e;
    return 0.5 * (std::log(f) - std::log(sj) - 1.0 + quad / f);
}

double kl_meanfield_total(const VariationalState& vs, const KernelParams& kp, const Mat& Zord,
                          const NeighborIndex& idx) {
    if (vs.size() != idx.m() || Zord.rows() != idx.m())
        throw ArgumentError("state, index and inducing points disagree on M");
    const double floor = kVarFloorRel * kp.outputscale();
    double total = 0.0;
    for (int j = 0; j < idx.m(); ++j) {
        const auto cm = conditional_moments(kp, Zord, idx.inducing_nn[j], Zord.row(j).transpose());
        total += kl_meanfield_term(vs, cm, j, idx.inducing_nn[j], floor);
    }
    return total;
}

// ---- ELBO ----

namespace {

// Reusable workspace for the ELBO hot path. One instance serves a whole
// evaluation: buffers grow to the largest neighbor set and stay put, so the
// per-term heap traffic disappears, and the backward pass reuses the forward
// gram's transcendentals instead of recomputing them pair by pair.
struct MomentScratch {
    KernelCtx kctx; // hoisted kernel transforms, built once per evaluation
    Mat Zn;         // gathered neighbor rows
    Mat T1;         // target row, kept 1 x D for the cross block
    Mat Knn;        // neighbor gram; holds the jittered diagonal after factoring
    Mat kx;         // nk x 1 cross covariances against the target
    GramWork gw;    // forward intermediates of Knn
    GramWork gwx;   // forward intermediates of kx
    Eigen::LLT<Mat> llt;
    RcondScratch rs;
    Vec b;        // Knn^{-1} kx
    Vec gb;       // adjoint of kx as seen through b
    Vec sol;      // Knn^{-1} gb, then the left factor of the gram adjoint
    Vec kbar;     // adjoint of the cross block
    Vec ones1 = Vec::Ones(1); // right factor of the cross-block adjoint
    Vec s_all;    // softplus(raw_s), hoisted once per evaluation
    Vec sig_all;  // sigmoid(raw_s), hoisted when a gradient is requested
    double k_self = 0.0;
    double f_cond = 0.0;
    double jitter_used = 0.0;
    bool clamped = false; // f hit the [0, k_self + jitter] clamp
    int nk = 0;
};

// Same numbers as conditional_moments, written into the scratch. k(x, x)
// equals the outputscale for every kernel here, and the gram block comes out
// of kernel_cross_into exactly symmetric, so it can be factored in place
// without the symmetrizing copy chol_jittered makes.
void moments_into_scratch(const KernelParams& kp, const Mat& Zord,
                          const std::vector<int>& nbrs, const Mat& src, int row,
                          MomentScratch& sc) {
    if (Zord.rows() > 0 && Zord.cols() != src.cols())
        throw ArgumentError("target dimension does not match inducing points");
    check_neighbor_set(nbrs, static_cast<int>(Zord.rows()));
    sc.k_self = sc.kctx.os;
    sc.nk = static_cast<int>(nbrs.size());
    sc.clamped = false;
    if (sc.nk == 0) {
        sc.jitter_used = 0.0;
        sc.f_cond = sc.k_self;
        return;
    }
    const int D = static_cast<int>(Zord.cols());
    sc.T1.resize(1, D);
    sc.T1.row(0) = src.row(row);
    sc.Zn.resize(sc.nk, D);
    for (int k = 0; k < sc.nk; ++k) sc.Zn.row(k) = Zord.row(nbrs[k]);
    kernel_cross_into(kp, sc.kctx, sc.Zn, sc.Zn, sc.Knn, &sc.gw);
    kernel_cross_into(kp, sc.kctx, sc.Zn, sc.T1, sc.kx, &sc.gwx);
    sc.jitter_used = chol_ladder_inplace(sc.llt, sc.Knn, sc.kctx.os, sc.rs);
    sc.b = sc.kx.col(0);
    sc.llt.matrixL().solveInPlace(sc.b);
    sc.llt.matrixU().solveInPlace(sc.b);
    const double upper = sc.k_self + sc.jitter_used;
    double f = upper - sc.kx.col(0).dot(sc.b);
    if (f < 0.0 || f > upper) {
        f = std::clamp(f, 0.0, upper);
        sc.clamped = true;
    }
    sc.f_cond = f;
}

// Pushes (gb, gf) adjoints of (b, f_cond) through the scratch into kernel raw
// gradients with the given weight. Expects sc.gb filled when sc.nk > 0.
void adjoints_from_scratch(const KernelParams& kp, MomentScratch& sc, double gf,
                           double weight, Vec& d_kernel_raw) {
    // d f / d k_self = 1 (jitter treated as locally constant), and k(x, x)
    // moves only along the outputscale direction
    if (gf != 0.0) {
        const int D = static_cast<int>(sc.kctx.sig_raw.size()) - 1;
        d_kernel_raw[D] += weight * gf * sc.kctx.sig_raw[D];
    }
    if (sc.nk == 0) return;
    sc.sol = sc.gb;
    sc.llt.matrixL().solveInPlace(sc.sol);
    sc.llt.matrixU().solveInPlace(sc.sol);
    // with sol = Knn^{-1} gb, the block adjoints are rank one in b:
    // k_bar = sol - 2 gf b and K_bar = -sol b' + gf b b' = (gf b - sol) b'
    sc.kbar = sc.sol - 2.0 * gf * sc.b;
    sc.sol = gf * sc.b - sc.sol;
    kernel_gram_backward(kp, sc.kctx, sc.Zn, sc.T1, sc.gwx, sc.kbar, sc.ones1, weight,
                         d_kernel_raw);
    kernel_gram_backward(kp, sc.kctx, sc.Zn, sc.Zn, sc.gw, sc.sol, sc.b, weight,
                         d_kernel_raw);
}

// Adds one data term (scaled) to the breakdown sum and gradient.
double data_term_grad(const KernelParams& kp, const LikelihoodParams& lik,
                      const VariationalState& vs, const Mat& Zord, const NeighborIndex& idx,
                      const Mat& X, const Vec& y, int i, double scale, ElboGrad* grad,
                      MomentScratch& sc) {
    const auto& nbrs = idx.data_nn[i];
    moments_into_scratch(kp, Zord, nbrs, X, i, sc);
    const double floor = kVarFloorRel * sc.k_self;

    GaussianMarginal q;
    if (sc.nk == 0) {
        q = {0.0, sc.k_self};
    } else {
        q.variance = std::max(sc.f_cond, floor);
        for (int k = 0; k < sc.nk; ++k) {
            q.mean += sc.b[k] * vs.m[nbrs[k]];
            q.variance += sc.b[k] * sc.b[k] * sc.s_all[nbrs[k]];
        }
    }

    EllGrad eg;
    const double ell = expected_log_lik(lik, q, y[i], grad ? &eg : nullptr);
    if (!grad) return ell;

    if (lik.has_trainable()) grad->d_lik_raw += scale * eg.d_raw;
    if (sc.nk == 0) {
        // prior marginal: variance is k_self, mean constant zero, so only the
        // outputscale direction moves
        const int D = static_cast<int>(sc.kctx.sig_raw.size()) - 1;
        grad->d_kernel_raw[D] += scale * eg.d_var * sc.kctx.sig_raw[D];
        return ell;
    }
    sc.gb.resize(sc.nk);
    for (int k = 0; k < sc.nk; ++k) {
        const int j = nbrs[k];
        const double bk = sc.b[k];
        grad->d_m[j] += scale * eg.d_mean * bk;
        grad->d_raw_s[j] += scale * eg.d_var * bk * bk * sc.sig_all[j];
        sc.gb[k] = eg.d_mean * vs.m[j] + 2.0 * eg.d_var * bk * sc.s_all[j];
    }
    const double gf = (sc.f_cond > floor && !sc.clamped) ? eg.d_var : 0.0;
    adjoints_from_scratch(kp, sc, gf, scale, grad->d_kernel_raw);
    return ell;
}

// Adds one KL term (scale applied by caller through `scale`, which carries
// the minus sign of the ELBO) to the gradient; returns the raw term value.
double kl_term_grad(const KernelParams& kp, const VariationalState& vs, const Mat& Zord,
                    const NeighborIndex& idx, int j, double scale, ElboGrad* grad,
                    MomentScratch& sc) {
    const auto& nbrs = idx.inducing_nn[j];
    moments_into_scratch(kp, Zord, nbrs, Zord, j, sc);
    const double floor = kVarFloorRel * sc.kctx.os;
    const double f = std::max(sc.f_cond, floor);
    if (!(f > 0.0))
        throw NumericalError("conditional variance not positive at inducing index " +
                             std::to_string(j));
    const double sj = sc.s_all[j];
    double e = vs.m[j];
    double quad = sj;
    for (int k = 0; k < sc.nk; ++k) {
        const double bk = sc.b[k];
        e -= bk * vs.m[nbrs[k]];
        quad += bk * bk * sc.s_all[nbrs[k]];
    }
    quad += e * e;
    const double term = 0.5 * (std::log(f) - std::log(sj) - 1.0 + quad / f);
    if (!grad) return term;

    grad->d_m[j] += scale * e / f;
    grad->d_raw_s[j] += scale * 0.5 * (1.0 / f - 1.0 / sj) * sc.sig_all[j];
    sc.gb.resize(sc.nk);
    for (int k = 0; k < sc.nk; ++k) {
        const int jk = nbrs[k];
        const double bk = sc.b[k];
        grad->d_m[jk] += scale * (-e * bk / f);
        grad->d_raw_s[jk] += scale * 0.5 * bk * bk / f * sc.sig_all[jk];
        sc.gb[k] = (bk * sc.s_all[jk] - e * vs.m[jk]) / f;
    }
    const double gf =
        (sc.f_cond > floor && !sc.clamped) ? 0.5 * (1.0 / f - quad / (f * f)) : 0.0;
    adjoints_from_scratch(kp, sc, gf, scale, grad->d_kernel_raw);
    return term;
}

void check_elbo_inputs(const VariationalState& vs, const Mat& Zord, const NeighborIndex& idx,
                       const Mat& X, const Vec& y) {
    if (vs.size() != idx.m() || Zord.rows() != idx.m())
        throw ArgumentError("state, index and inducing points disagree on M");
    if (X.rows() != idx.n() || y.size() != X.rows())
        throw ArgumentError("data and index disagree on N");
    if (vs.has_fullrank())
        throw UnsupportedError("ELBO training path is mean-field only");
}

} // namespace

ElboBreakdown elbo_full(const KernelParams& kp, const LikelihoodParams& lik,
                        const VariationalState& vs, const Mat& Zord, const NeighborIndex& idx,
                        const Mat& X, const Vec& y, ElboGrad* grad) {
    check_elbo_inputs(vs, Zord, idx, X, y);
    if (grad) *grad = ElboGrad::zeros(kp.n_raw(), vs.size());
    MomentScratch sc;
    sc.kctx = make_kernel_ctx(kp);
    sc.s_all = vs.s();
    if (grad) sc.sig_all = vs.raw_s.unaryExpr([](double v) { return sigmoid(v); });
    ElboBreakdown out;
    for (int i = 0; i < idx.n(); ++i)
        out.data_term += data_term_grad(kp, lik, vs, Zord, idx, X, y, i, 1.0, grad, sc);
    for (int j = 0; j < idx.m(); ++j)
        out.kl_term += kl_term_grad(kp, vs, Zord, idx, j, -1.0, grad, sc);
    out.scale_data = 1.0;
    out.scale_kl = 1.0;
    out.total = out.data_term - out.kl_term;
    return out;
}

ElboBreakdown elbo_stochastic(const KernelParams& kp, const LikelihoodParams& lik,
                              const VariationalState& vs, const Mat& Zord,
                              const NeighborIndex& idx, const Mat& X, const Vec& y,
                              std::span<const int> data_batch, std::span<const int> ip_batch,
                              ElboGrad* grad) {
    check_elbo_inputs(vs, Zord, idx, X, y);
    if (data_batch.empty() || ip_batch.empty())
        throw ArgumentError("batches must be nonempty");
    for (int i : data_batch)
        if (i < 0 || i >= idx.n()) throw ArgumentError("data batch index out of range");
    for (int j : ip_batch)
        if (j < 0 || j >= idx.m()) throw ArgumentError("inducing batch index out of range");

    if (grad) *grad = ElboGrad::zeros(kp.n_raw(), vs.size());
    MomentScratch sc;
    sc.kctx = make_kernel_ctx(kp);
    sc.s_all = vs.s();
    if (grad) sc.sig_all = vs.raw_s.unaryExpr([](double v) { return sigmoid(v); });
    ElboBreakdown out;
    out.scale_data = static_cast<double>(idx.n()) / static_cast<double>(data_batch.size());
    out.scale_kl = static_cast<double>(idx.m()) / static_cast<double>(ip_batch.size());
    for (int i : data_batch)
        out.data_term += data_term_grad(kp, lik, vs, Zord, idx, X, y, i, out.scale_data, grad, sc);
    for (int j : ip_batch)
        out.kl_term += kl_term_grad(kp, vs, Zord, idx, j, -out.scale_kl, grad, sc);
    out.total = out.scale_data * out.data_term - out.scale_kl * out.kl_term;
    out.data_batch.assign(data_batch.begin(), data_batch.end());
    out.ip_batch.assign(ip_batch.begin(), ip_batch.end());
    return out;
}

// ---- prediction ----

PredictOutput predict_point(const KernelParams& kp, const LikelihoodParams& lik,
                            const VariationalState& vs, const Mat& Zord, int K,
                            const Vec& x_star) {
    const auto nbrs = data_nn_for_point(Zord, x_star, K);
    const auto cm = conditional_moments(kp, Zord, nbrs, x_star);
    const double k_self = kernel_eval(kp, x_star, x_star);
    PredictOutput out;
    out.f = vs.has_fullrank() ? q_f_marginal_fullrank(vs, cm, nbrs, k_self)
                              : q_f_marginal(vs, cm, nbrs, k_self);
    switch (lik.kind) {
        case LikelihoodKind::Gaussian:
            out.y_mean = out.f.mean;
            out.y_var = out.f.variance + lik.noise();
            break;
        case LikelihoodKind::Bernoulli: {
            const double p = probit_predictive_prob(out.f);
            out.y_mean = 2.0 * p - 1.0;
            out.y_var = 1.0 - out.y_mean * out.y_mean;
            break;
        }
        case LikelihoodKind::StudentT: {
            out.y_mean = out.f.mean;
            const double s = lik.scale();
            out.y_var = lik.dof > 2.0
                            ? out.f.variance + lik.dof * s * s / (lik.dof - 2.0)
                            : std::numeric_limits<double>::infinity();
            break;
        }
    }
    return out;
}

// ---- sparse precision factor ----

SparseRow precision_cholesky_row(const KernelParams& kp, const Mat& Zord,
                                 const NeighborIndex& idx, int j) {
    if (j < 0 || j >= idx.m()) throw ArgumentError("row index out of range");
    const auto& nbrs = idx.inducing_nn[j];
    const auto cm = conditional_moments(kp, Zord, nbrs, Zord.row(j).transpose());
    const double floor = kVarFloorRel * kp.outputscale();
    const double f = std::max(cm.f_cond, floor);
    if (!(f > 0.0))
        throw NumericalError("conditional variance not positive at inducing index " +
                             std::to_string(j));
    const double inv_sqrt_f = 1.0 / std::sqrt(f);
    SparseRow row;
    row.cols.reserve(nbrs.size() + 1);
    row.vals.resize(static_cast<int>(nbrs.size()) + 1);
    for (size_t k = 0; k < nbrs.size(); ++k) {
        row.cols.push_back(nbrs[k]);
        row.vals[static_cast<int>(k)] = -inv_sqrt_f * cm.b[static_cast<int>(k)];
    }
    row.cols.push_back(j);
    row.vals[static_cast<int>(nbrs.size())] = inv_sqrt_f;
    return row;
}

Mat assemble_precision_cholesky(const KernelParams& kp, const Mat& Zord,
                                const NeighborIndex& idx) {
    const int m = idx.m();
    if (Zord.rows() != m) throw ArgumentError("index and inducing points disagree on M");
    Mat L = Mat::Zero(m, m);
    for (int j = 0; j < m; ++j) {
        const SparseRow row = precision_cholesky_row(kp, Zord, idx, j);
        for (size_t k = 0; k < row.cols.size(); ++k)
            L(j, row.cols[k]) = row.vals[static_cast<int>(k)];
    }
    return L;
}

double kl_fullrank(const VariationalState& vs, const KernelParams& kp, const Mat& Zord,
                   const NeighborIndex& idx) {
    if (!vs.has_fullrank()) throw ArgumentError("full-rank KL needs a full-rank state");
    const int m = idx.m();
    if (vs.size() != m || Zord.rows() != m)
        throw ArgumentError("state, index and inducing points disagree on M");
    const Mat Lt = vs.fullrank_factor();
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
        const SparseRow row = precision_cholesky_row(kp, Zord, idx, i);
        const double l_ii = row.vals[row.vals.size() - 1];
        // u = row_i(L) * Ltilde, accumulated over the row's nonzeros
        Eigen::RowVectorXd u = Eigen::RowVectorXd::Zero(m);
        double lm = 0.0;
        for (size_t k = 0; k < row.cols.size(); ++k) {
            u += row.vals[static_cast<int>(k)] * Lt.row(row.cols[k]);
            lm += row.vals[static_cast<int>(k)] * vs.m[row.cols[k]];
        }
        acc += -2.0 * std::log(l_ii) - 2.0 * std::log(Lt(i, i)) - 1.0 + u.squaredNorm() +
               lm * lm;
    }
    return 0.5 * acc;
}

MomentCache build_moment_cache(const KernelParams& kp, const Mat& Zord,
                               const NeighborIndex& idx, const Mat& X) {
    MomentCache cache;
    cache.ind_cm.reserve(idx.m());
    cache.ind_kself.resize(idx.m());
    for (int j = 0; j < idx.m(); ++j) {
        const Vec zj = Zord.row(j).transpose();
        cache.ind_cm.push_back(conditional_moments(kp, Zord, idx.inducing_nn[j], zj));
        cache.ind_kself[j] = kernel_eval(kp, zj, zj);
    }
    cache.data_cm.reserve(idx.n());
    cache.data_kself.resize(idx.n());
    for (int i = 0; i < idx.n(); ++i) {
        const Vec xi = X.row(i).transpose();
        cache.data_cm.push_back(conditional_moments(kp, Zord, idx.data_nn[i], xi));
        cache.data_kself[i] = kernel_eval(kp, xi, xi);
    }
    return cache;
}

} // namespace vnngp
