#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace vnngp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kLog2Pi = 1.8378770664093454836;
inline constexpr double kSqrt2 = 1.4142135623730950488;
inline constexpr double kSqrtPi = 1.7724538509055160273;

// softplus(x) = log(1 + e^x); switches to the identity once log1p(e^-x)
// drops below double resolution so large raw values round-trip exactly.
inline double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

// Inverse of softplus on (0, inf). y = 0 maps to -inf, which softplus sends
// back to 0; useful for degenerate zero-outputscale edge cases.
inline double inv_softplus(double y) {
    return y > 30.0 ? y : std::log(std::expm1(y));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double log_norm_pdf(double z) {
    return -0.5 * (z * z + kLog2Pi);
}

inline double norm_cdf(double z) {
    return 0.5 * std::erfc(-z / kSqrt2);
}

// log Phi(z), stable into the deep left tail where erfc underflows.
inline double log_norm_cdf(double z) {
    if (z > -37.0) {
        return std::log(0.5 * std::erfc(-z / kSqrt2));
    }
    // Asymptotic expansion Phi(z) ~ phi(z)/(-z) * (1 - 1/z^2 + 3/z^4)
    double z2 = z * z;
    return log_norm_pdf(z) - std::log(-z) + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

// d/dz log Phi(z) = phi(z) / Phi(z); evaluated in log space so the ratio
// survives arguments where both factors underflow.
inline double norm_pdf_over_cdf(double z) {
    return std::exp(log_norm_pdf(z) - log_norm_cdf(z));
}

} // namespace vnngp
