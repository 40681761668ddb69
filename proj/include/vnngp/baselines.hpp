#pragma once

#include <span>
#include <vector>

#include "vnngp/kernel.hpp"
#include "vnngp/likelihood.hpp"
#include "vnngp/smallmat.hpp"
#include "vnngp/vnngp.hpp"

namespace vnngp {

// Dense exact GP regression is kept as a reference implementation; above
// this size the O(N^3) solve stops being a sensible baseline on one core.
inline constexpr int kExactGpCap = 4096;

struct ExactPosterior {
    Mat X_train;
    CholFactor chol; // of K + noise I
    Vec alpha;       // (K + noise I)^{-1} y
    double noise = 0.0;
};

ExactPosterior exact_gp_posterior(const KernelParams& kp, const LikelihoodParams& lik,
                                  const Mat& X, const Vec& y);

GaussianMarginal exact_gp_predict(const ExactPosterior& post, const KernelParams& kp,
                                  const Vec& x_star);

// log p(y | X, theta) for the Gaussian model, with gradients in the raw
// parameterization ([kernel raws..., raw noise]) when grad is non-null.
double exact_log_marginal(const KernelParams& kp, double noise_raw, const Mat& X, const Vec& y,
                          Vec* grad = nullptr);

// ---- SVGP (global inducing points, dense K_zz) ----

double svgp_kl_exact(const VariationalState& vs, const KernelParams& kp, const Mat& Z);

ElboBreakdown svgp_elbo(const KernelParams& kp, const LikelihoodParams& lik,
                        const VariationalState& vs, const Mat& Z, const Mat& X, const Vec& y,
                        std::span<const int> data_batch, ElboGrad* grad = nullptr);

// ---- SWSGP (per-point inducing subsets, no ordering constraint) ----

double kl_subset(const VariationalState& vs, const KernelParams& kp, const Mat& Z,
                 const std::vector<int>& subset);

// (N/N_b) sum_i E_q[log p(y_i | f_i)] - (1/N_b) sum_i KL(q(u_{n(i)}) || p(u_{n(i)})).
// Neighbor sets come from an unconstrained K-nearest search over all of Z.
ElboBreakdown swsgp_objective(const KernelParams& kp, const LikelihoodParams& lik,
                              const VariationalState& vs, const Mat& Z,
                              const std::vector<std::vector<int>>& data_nn, const Mat& X,
                              const Vec& y, std::span<const int> data_batch,
                              ElboGrad* grad = nullptr);

GaussianMarginal svgp_predict_f(const KernelParams& kp, const VariationalState& vs, const Mat& Z,
                                const Vec& x_star);

// Factors K_zz once and predicts all rows of X_star.
std::vector<GaussianMarginal> svgp_predict_batch(const KernelParams& kp,
                                                 const VariationalState& vs, const Mat& Z,
                                                 const Mat& X_star);

GaussianMarginal swsgp_predict_f(const KernelParams& kp, const VariationalState& vs, const Mat& Z,
                                 int K, const Vec& x_star);

} // namespace vnngp
