#pragma once

#include <string>

#include "vnngp/mathutil.hpp"

namespace vnngp {

enum class KernelKind { SquaredExponential, Matern52 };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

// ARD kernel parameters stored in unconstrained form; constrained values are
// softplus(raw). Raw values are what the optimizer and the model file see.
struct KernelParams {
    KernelKind kind = KernelKind::Matern52;
    Vec raw_lengthscales;
    double raw_outputscale = 0.0;

    static KernelParams make(KernelKind kind, const Vec& lengthscales, double outputscale);

    int dim() const { return static_cast<int>(raw_lengthscales.size()); }
    int n_raw() const { return dim() + 1; } // lengthscales then outputscale
    Vec lengthscales() const;
    double outputscale() const { return softplus(raw_outputscale); }
};

double kernel_eval(const KernelParams& p, const Vec& x, const Vec& x2);

// Entry (a, b) = eval(A.row(a), B.row(b)); empty inputs give empty matrices.
Mat kernel_cross(const KernelParams& p, const Mat& A, const Mat& B);

// Forward intermediates of a gram block, kept so the backward pass can avoid
// recomputing any transcendentals. `acc` is backward-pass scratch.
struct GramWork {
    Mat E;   // exp factor per pair: se exp(-r2/2), matern52 exp(-u)
    Mat U;   // matern52 only: u = sqrt5 * r (left empty for se)
    Vec acc; // per-raw accumulator reused across kernel_gram_backward calls
};

// Transformed parameters hoisted out of the per-pair loops: build once per
// batch of gram evaluations against the same KernelParams and reuse.
struct KernelCtx {
    Vec ls;      // lengthscales
    Vec inv_l3;  // 1 / ls^3 per dimension
    Vec sig_raw; // sigmoid of each raw parameter (lengthscales, outputscale)
    double os = 0.0;
    double c52 = 0.0; // (5/3) * outputscale, matern52 lengthscale factor
};
KernelCtx make_kernel_ctx(const KernelParams& p);

// kernel_cross into preallocated storage (K is resized); per-pair arithmetic
// is identical to kernel_cross, so the values match it bitwise. Pass `work`
// to record intermediates for kernel_gram_backward.
void kernel_cross_into(const KernelParams& p, const KernelCtx& ctx, const Mat& A,
                       const Mat& B, Mat& K, GramWork* work);
void kernel_cross_into(const KernelParams& p, const Mat& A, const Mat& B, Mat& K,
                       GramWork* work);

// Accumulate weight * d k(x, x2) / d raw into grad (layout: lengthscales, outputscale).
void kernel_grad_accumulate(const KernelParams& p, const Vec& x, const Vec& x2,
                            double weight, Eigen::Ref<Vec> grad);

// Accumulates weight * sum_{a,b} u[a] v[b] * d k(A_a, B_b) / d raw into grad
// (the block adjoints that arise here are rank one), reusing the forward
// intermediates recorded for this (A, B) block. Zero adjoint entries are
// skipped.
void kernel_gram_backward(const KernelParams& p, const KernelCtx& ctx, const Mat& A,
                          const Mat& B, GramWork& work, const Vec& u, const Vec& v,
                          double weight, Eigen::Ref<Vec> grad);

} // namespace vnngp
