#pragma once

#include <optional>
#include <span>
#include <vector>

#include "vnngp/kernel.hpp"
#include "vnngp/likelihood.hpp"
#include "vnngp/neighbors.hpp"

namespace vnngp {

// Relative floor applied to conditional variances inside KL and marginal
// variance formulas; coincident inducing/data locations drive f_j to zero
// and the KL divides by f_j.
inline constexpr double kVarFloorRel = 1e-8;

// Mean-field variational state: q(u_j) = N(m_j, s_j), variances stored raw
// (softplus). The optional full-rank factor Ltilde (lower triangular, raw
// diagonal) replaces s for KL verification experiments.
struct VariationalState {
    Vec m;
    Vec raw_s;
    std::optional<Mat> fullrank_raw;

    static VariationalState init_meanfield(int M); // m = 0, s = 1
    static VariationalState from_meanfield(const Vec& m, const Vec& s);

    int size() const { return static_cast<int>(m.size()); }
    Vec s() const;
    double s_at(int j) const { return softplus(raw_s[j]); }
    bool has_fullrank() const { return fullrank_raw.has_value(); }
    Mat fullrank_factor() const; // softplus on the diagonal, lower triangle as stored
    void set_fullrank_from_factor(const Mat& Ltilde);
};

// b = K_{n,n}^{-1} k_{n,target} and f = k(target,target) - k' K^{-1} k,
// both computed against the jittered neighbor block (the jitter is applied
// to the full joint, so f picks up the same diagonal shift).
struct ConditionalMoments {
    Vec b;
    double f_cond = 0.0;
};

ConditionalMoments conditional_moments(const KernelParams& kp, const Mat& Zord,
                                       const std::vector<int>& nbrs, const Vec& target);

// q(f) for a point with neighbor set nbrs: mean b'm_n, variance
// f_cond + sum_k b_k^2 s_{n(k)}. Empty neighbor set gives the prior (0, k_self).
GaussianMarginal q_f_marginal(const VariationalState& vs, const ConditionalMoments& cm,
                              const std::vector<int>& nbrs, double k_self);

// Full-rank variant: variance f_cond + b' (Ltilde Ltilde')_{n,n} b.
GaussianMarginal q_f_marginal_fullrank(const VariationalState& vs, const ConditionalMoments& cm,
                                       const std::vector<int>& nbrs, double k_self);

// One term of the factorized KL:
// 1/2 [log f_j - log s_j - 1 + (s_j + (b^2)'s_n + (m_j - b'm_n)^2) / f_j].
double kl_meanfield_term(const VariationalState& vs, const ConditionalMoments& cm, int j,
                         const std::vector<int>& nbrs, double var_floor);

double kl_meanfield_total(const VariationalState& vs, const KernelParams& kp, const Mat& Zord,
                          const NeighborIndex& idx);

// ELBO value decomposition. data_term and kl_term are unscaled batch sums;
// total = scale_data * data_term - scale_kl * kl_term.
struct ElboBreakdown {
    double total = 0.0;
    double data_term = 0.0;
    double kl_term = 0.0;
    double scale_data = 1.0;
    double scale_kl = 1.0;
    std::vector<int> data_batch; // empty = full batch
    std::vector<int> ip_batch;
};

// Gradient of an ELBO with respect to unconstrained parameters.
struct ElboGrad {
    Vec d_kernel_raw;
    double d_lik_raw = 0.0;
    Vec d_m;
    Vec d_raw_s;

    static ElboGrad zeros(int n_kernel_raw, int M);
};

ElboBreakdown elbo_full(const KernelParams& kp, const LikelihoodParams& lik,
                        const VariationalState& vs, const Mat& Zord, const NeighborIndex& idx,
                        const Mat& X, const Vec& y, ElboGrad* grad = nullptr);

// Doubly minibatched estimator: (N/N_b) sum_{i in data_batch} data terms
// - (M/M_b) sum_{j in ip_batch} KL terms. Unbiased over uniform batches.
ElboBreakdown elbo_stochastic(const KernelParams& kp, const LikelihoodParams& lik,
                              const VariationalState& vs, const Mat& Zord,
                              const NeighborIndex& idx, const Mat& X, const Vec& y,
                              std::span<const int> data_batch, std::span<const int> ip_batch,
                              ElboGrad* grad = nullptr);

struct PredictOutput {
    GaussianMarginal f;  // q(f*)
    double y_mean = 0.0; // predictive mean of y (Bernoulli: E[y] with labels +-1)
    double y_var = 0.0;  // predictive variance of y
};

PredictOutput predict_point(const KernelParams& kp, const LikelihoodParams& lik,
                            const VariationalState& vs, const Mat& Zord, int K,
                            const Vec& x_star);

// Row j of the sparse Cholesky factor L with L'L ~= K_zz^{-1}:
// L[j,j] = f_j^{-1/2}, L[j, n(j)] = -f_j^{-1/2} b_j'. At most K+1 nonzeros.
struct SparseRow {
    std::vector<int> cols; // ascending; the diagonal position j is last
    Vec vals;
};

SparseRow precision_cholesky_row(const KernelParams& kp, const Mat& Zord,
                                 const NeighborIndex& idx, int j);

Mat assemble_precision_cholesky(const KernelParams& kp, const Mat& Zord,
                                const NeighborIndex& idx);

// KL(N(m, Ltilde Ltilde') || N(0, K_zz)) computed through the sparse rows of
// L: 1/2 sum_i [-2 log L_ii - 2 log Ltilde_ii - 1 + ||row_i(L) Ltilde||^2
// + ((L m)_i)^2], which matches the dense Gaussian KL at K = M-1.
double kl_fullrank(const VariationalState& vs, const KernelParams& kp, const Mat& Zord,
                   const NeighborIndex& idx);

// Precomputed conditional moments for a fixed kernel and index; backs the
// fixed-hyperparameter experiment paths where only (m, s) move.
struct MomentCache {
    std::vector<ConditionalMoments> data_cm;
    std::vector<ConditionalMoments> ind_cm;
    Vec data_kself;
    Vec ind_kself;
};

MomentCache build_moment_cache(const KernelParams& kp, const Mat& Zord,
                               const NeighborIndex& idx, const Mat& X);

} // namespace vnngp
