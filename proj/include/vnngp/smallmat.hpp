#pragma once

#include "vnngp/mathutil.hpp"

namespace vnngp {

inline constexpr int kCholMaxDim = 8192;
inline constexpr double kCholJitterLadder[] = {0.0, 1e-8, 1e-6, 1e-4};

// Factors whose estimated reciprocal condition number falls below this are
// treated as failures so the jitter ladder escalates. Double-precision
// Cholesky otherwise "succeeds" on numerically singular kernel blocks and
// produces explosive solve outputs.
inline constexpr double kCholRcondFloor = 1e-8;

struct CholFactor {
    Mat L;                    // lower triangular
    double jitter_used = 0.0; // absolute jitter added to the diagonal

    int dim() const { return static_cast<int>(L.rows()); }
};

// Cholesky of (A + A')/2 + jitter*I, escalating jitter through
// {0, 1e-8, 1e-6, 1e-4} * scale until the factorization is trustworthy.
CholFactor chol_jittered(const Mat& A, double scale);

// Buffers for the conditioning estimate inside the jitter ladder, reusable
// across calls so the hot path allocates nothing.
struct RcondScratch {
    Vec v, sign, old_sign;
};

// Allocation-free core of chol_jittered for hot loops: factors S (which must
// already be symmetric) plus ladder jitter into `llt`, reusing its storage.
// S's diagonal is left holding the accepted jitter. Returns the jitter used;
// throws like chol_jittered when the ladder is exhausted.
double chol_ladder_inplace(Eigen::LLT<Mat>& llt, Mat& S, double scale, RcondScratch& rs);
double chol_ladder_inplace(Eigen::LLT<Mat>& llt, Mat& S, double scale);

// Solve (L L') x = b.
Vec chol_solve(const CholFactor& F, const Vec& b);
Mat chol_solve(const CholFactor& F, const Mat& B);

// log det(L L') = 2 * sum(log diag L).
double chol_logdet(const CholFactor& F);

} // namespace vnngp
