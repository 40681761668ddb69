#pragma once

#include <string>

#include "vnngp/mathutil.hpp"

namespace vnngp {

enum class LikelihoodKind { Gaussian, Bernoulli, StudentT };

std::string to_string(LikelihoodKind kind);
LikelihoodKind likelihood_kind_from_string(const std::string& name);

// Observation models. Positive parameters (Gaussian noise variance,
// Student-t scale) are stored raw with softplus transform; Student-t dof is
// a fixed hyperparameter. Bernoulli uses the probit link with labels +-1.
struct LikelihoodParams {
    LikelihoodKind kind = LikelihoodKind::Gaussian;
    double raw_noise = 0.0;  // Gaussian: noise variance
    double raw_scale = 0.0;  // StudentT: scale
    double dof = 4.0;        // StudentT only, not trained
    int quad_order = 20;     // Gauss-Hermite nodes for non-Gaussian integrals

    static LikelihoodParams gaussian(double noise_variance);
    static LikelihoodParams bernoulli();
    static LikelihoodParams student_t(double dof, double scale);

    double noise() const { return softplus(raw_noise); }
    double scale() const { return softplus(raw_scale); }

    // The single trainable raw parameter, if any.
    bool has_trainable() const { return kind != LikelihoodKind::Bernoulli; }
    double trainable_raw() const;
    void set_trainable_raw(double v);
};

struct GaussianMarginal {
    double mean = 0.0;
    double variance = 0.0;
};

// Gradients of expected_log_lik: with respect to the marginal's mean and
// variance, and to the trainable raw likelihood parameter.
struct EllGrad {
    double d_mean = 0.0;
    double d_var = 0.0;
    double d_raw = 0.0;
};

// E_{f ~ N(q)}[log p(y | f)]. Gaussian is closed form; Bernoulli and
// Student-t integrate by Gauss-Hermite quadrature.
double expected_log_lik(const LikelihoodParams& lik, const GaussianMarginal& q, double y,
                        EllGrad* grad = nullptr);

// -log of the predictive density integral p(y | q) = int p(y|f) q(f) df.
double predictive_nll(const LikelihoodParams& lik, const GaussianMarginal& q, double y);

// Closed-form probit predictive P(y = +1) = Phi(mean / sqrt(1 + variance));
// cross-checks the quadrature path and backs the accuracy metric.
double probit_predictive_prob(const GaussianMarginal& q);

// Physicists' Gauss-Hermite rule: int e^{-x^2} h(x) dx ~= sum w_q h(x_q).
struct QuadRule {
    Vec nodes;
    Vec weights;
};
const QuadRule& gauss_hermite(int order);

} // namespace vnngp
