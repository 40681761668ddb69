#include "vnngp/smallmat.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <string>

#include "vnngp/errors.hpp"

namespace vnngp {

namespace {

// These two functions mirror Eigen's LLT conditioning estimate (the l1 norm
// accumulated in LLT::compute plus the Higham-Hager estimator driving
// LLT::rcond) operation for operation, so the ladder's acceptance decisions
// are identical while the per-call temporaries disappear from hot loops.
// For a real LLT the adjoint solve is the same L then U substitution as the
// plain solve, which is why one solve routine serves both.

double lower_l1_norm(const Mat& S) {
    const Eigen::Index n = S.rows();
    double norm = 0.0;
    for (Eigen::Index col = 0; col < n; ++col) {
        const double abs_col_sum = S.col(col).tail(n - col).lpNorm<1>() +
                                   S.row(col).head(col).lpNorm<1>();
        if (abs_col_sum > norm) norm = abs_col_sum;
    }
    return norm;
}

double rcond_estimate(const Eigen::LLT<Mat>& llt, double l1_norm, RcondScratch& rs) {
    const Eigen::Index n = llt.matrixLLT().rows();
    if (l1_norm == 0.0) return 0.0;
    if (n == 1) return 1.0;
    const auto solve_inplace = [&llt](Vec& x) {
        llt.matrixL().solveInPlace(x);
        llt.matrixU().solveInPlace(x);
    };
    rs.v.resize(n);
    rs.v.setConstant(1.0 / static_cast<double>(n));
    solve_inplace(rs.v);
    double lower_bound = rs.v.lpNorm<1>();
    rs.sign.resize(n);
    double old_lower_bound = lower_bound;
    Eigen::Index v_max_abs_index = -1;
    Eigen::Index old_v_max_abs_index = v_max_abs_index;
    for (int k = 0; k < 4; ++k) {
        rs.sign = (rs.v.array() < 0.0).select(-Vec::Ones(n), Vec::Ones(n));
        if (k > 0 && rs.sign == rs.old_sign) break;
        rs.v = rs.sign;
        solve_inplace(rs.v);
        rs.v.cwiseAbs().maxCoeff(&v_max_abs_index);
        if (v_max_abs_index == old_v_max_abs_index) break;
        rs.v.setZero();
        rs.v[v_max_abs_index] = 1.0;
        solve_inplace(rs.v);
        lower_bound = rs.v.lpNorm<1>();
        if (lower_bound <= old_lower_bound) break;
        rs.old_sign = rs.sign;
        old_v_max_abs_index = v_max_abs_index;
        old_lower_bound = lower_bound;
    }
    // second estimate from a vector of alternating sign and slowly growing
    // magnitude, guarding against cancellation in the first
    double alternating_sign = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        rs.v[i] = alternating_sign *
                  (1.0 + (static_cast<double>(i) / static_cast<double>(n - 1)));
        alternating_sign = -alternating_sign;
    }
    solve_inplace(rs.v);
    const double alternate_lower_bound =
        (2 * rs.v.lpNorm<1>()) / (3 * static_cast<double>(n));
    lower_bound = std::max(lower_bound, alternate_lower_bound);
    return lower_bound == 0.0 ? 0.0 : (1.0 / lower_bound) / l1_norm;
}

// Pessimistic but cheap acceptance check. For a triangular factor L the
// componentwise bound |L^{-1}| <= M(L)^{-1} holds, where M(L) keeps the
// positive diagonal and flips every off-diagonal entry to -|L_ij|; solving
// M(L) y = e and M(L)^T x = e with all-positive recurrences then bounds
// ||L^{-1}||_inf and ||L^{-T}||_inf from above, and their product bounds
// ||A^{-1}||_1. The sweep above only ever under-estimates ||A^{-1}||_1, so
// whenever even this upper bound keeps the condition estimate over the floor
// the sweep would accept too and its solves can be skipped. The bound loosens
// quickly with dimension, so it is consulted only for small factors where the
// sweep's cost would otherwise dominate the factorization.
constexpr Eigen::Index kCholPrecheckMaxDim = 32;

bool rcond_precheck_passes(const Eigen::LLT<Mat>& llt, double l1_norm,
                           RcondScratch& rs) {
    const Eigen::Index n = llt.matrixLLT().rows();
    if (n < 2 || n > kCholPrecheckMaxDim || l1_norm == 0.0) return false;
    const double* L = llt.matrixLLT().data();
    rs.v.resize(n);
    double* y = rs.v.data();
    for (Eigen::Index i = 0; i < n; ++i) y[i] = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double* col = L + j * n;
        y[j] /= col[j];
        const double yj = y[j];
        for (Eigen::Index i = j + 1; i < n; ++i) y[i] += std::abs(col[i]) * yj;
    }
    double inf_bound = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) inf_bound = std::max(inf_bound, y[i]);
    // the forward result is consumed, so the transposed solve reuses the buffer
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        const double* col = L + i * n;
        double acc = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) acc += std::abs(col[j]) * y[j];
        y[i] = acc / col[i];
    }
    double one_bound = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) one_bound = std::max(one_bound, y[i]);
    // accept when 1 / (bound * l1) clears the floor; overflow to inf or a NaN
    // in the factor safely fails the check and falls back to the sweep
    return inf_bound * one_bound * l1_norm * kCholRcondFloor <= 1.0;
}

} // namespace

double chol_ladder_inplace(Eigen::LLT<Mat>& llt, Mat& S, double scale) {
    RcondScratch rs;
    return chol_ladder_inplace(llt, S, scale, rs);
}

double chol_ladder_inplace(Eigen::LLT<Mat>& llt, Mat& S, double scale, RcondScratch& rs) {
    const auto n = S.rows();
    if (S.cols() != n) {
        throw ArgumentError("chol_jittered: matrix is not square (" +
                            std::to_string(n) + "x" + std::to_string(S.cols()) + ")");
    }
    if (n > kCholMaxDim) {
        throw ArgumentError("chol_jittered: dimension " + std::to_string(n) +
                            " exceeds maximum " + std::to_string(kCholMaxDim));
    }
    if (n == 0) return 0.0;
    if (!S.allFinite()) {
        throw NumericalError("chol_jittered: non-finite entries in input (dim " +
                             std::to_string(n) + ")");
    }
    Vec diag0; // copied lazily: the first rung leaves the diagonal untouched
    for (double rung : kCholJitterLadder) {
        const double jitter = rung * scale;
        if (jitter > 0.0) {
            if (diag0.size() == 0) diag0 = S.diagonal();
            S.diagonal() = diag0.array() + jitter;
        }
        llt.compute(S);
        if (llt.info() != Eigen::Success) continue;
        const double l1_norm = lower_l1_norm(S);
        if (!rcond_precheck_passes(llt, l1_norm, rs) &&
            rcond_estimate(llt, l1_norm, rs) < kCholRcondFloor) continue;
        return jitter;
    }
    throw NumericalError("chol_jittered: factorization failed at maximum jitter (dim " +
                         std::to_string(n) + ", scale " + std::to_string(scale) + ")");
}

CholFactor chol_jittered(const Mat& A, double scale) {
    if (A.cols() != A.rows()) {
        throw ArgumentError("chol_jittered: matrix is not square (" +
                            std::to_string(A.rows()) + "x" + std::to_string(A.cols()) + ")");
    }
    if (A.rows() == 0) return CholFactor{Mat(0, 0), 0.0};
    Mat S = 0.5 * (A + A.transpose());
    Eigen::LLT<Mat> llt;
    const double jitter = chol_ladder_inplace(llt, S, scale);
    return CholFactor{llt.matrixL(), jitter};
}

Vec chol_solve(const CholFactor& F, const Vec& b) {
    if (b.size() != F.L.rows()) {
        throw ArgumentError("chol_solve: rhs length " + std::to_string(b.size()) +
                            " does not match factor dimension " + std::to_string(F.L.rows()));
    }
    if (b.size() == 0) return Vec(0);
    Vec y = F.L.triangularView<Eigen::Lower>().solve(b);
    return F.L.transpose().triangularView<Eigen::Upper>().solve(y);
}

Mat chol_solve(const CholFactor& F, const Mat& B) {
    if (B.rows() != F.L.rows()) {
        throw ArgumentError("chol_solve: rhs rows " + std::to_string(B.rows()) +
                            " do not match factor dimension " + std::to_string(F.L.rows()));
    }
    if (B.rows() == 0) return Mat(0, B.cols());
    Mat Y = F.L.triangularView<Eigen::Lower>().solve(B);
    return F.L.transpose().triangularView<Eigen::Upper>().solve(Y);
}

double chol_logdet(const CholFactor& F) {
    return 2.0 * F.L.diagonal().array().log().sum();
}

} // namespace vnngp
