#include "vnngp/likelihood.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <mutex>

#include "vnngp/errors.hpp"

namespace vnngp {

std::string to_string(LikelihoodKind kind) {
    switch (kind) {
        case LikelihoodKind::Gaussian: return "gaussian";
        case LikelihoodKind::Bernoulli: return "bernoulli";
        case LikelihoodKind::StudentT: return "studentt";
    }
    throw ArgumentError("unknown likelihood kind");
}

LikelihoodKind likelihood_kind_from_string(const std::string& name) {
    if (name == "gaussian") return LikelihoodKind::Gaussian;
    if (name == "bernoulli") return LikelihoodKind::Bernoulli;
    if (name == "studentt" || name == "student_t") return LikelihoodKind::StudentT;
    throw ArgumentError("unknown likelihood: " + name);
}

LikelihoodParams LikelihoodParams::gaussian(double noise_variance) {
    if (!(noise_variance > 0.0) || !std::isfinite(noise_variance))
        throw ArgumentError("noise variance must be positive");
    LikelihoodParams p;
    p.kind = LikelihoodKind::Gaussian;
    p.raw_noise = inv_softplus(noise_variance);
    return p;
}

LikelihoodParams LikelihoodParams::bernoulli() {
    LikelihoodParams p;
    p.kind = LikelihoodKind::Bernoulli;
    return p;
}

LikelihoodParams LikelihoodParams::student_t(double dof, double scale) {
    if (!(dof > 1.0) || !std::isfinite(dof))
        throw ArgumentError("student-t dof must exceed 1");
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw ArgumentError("student-t scale must be positive");
    LikelihoodParams p;
    p.kind = LikelihoodKind::StudentT;
    p.dof = dof;
    p.raw_scale = inv_softplus(scale);
    return p;
}

double LikelihoodParams::trainable_raw() const {
    switch (kind) {
        case LikelihoodKind::Gaussian: return raw_noise;
        case LikelihoodKind::StudentT: return raw_scale;
        case LikelihoodKind::Bernoulli: break;
    }
    throw ArgumentError("likelihood has no trainable parameter");
}

void LikelihoodParams::set_trainable_raw(double v) {
    switch (kind) {
        case LikelihoodKind::Gaussian: raw_noise = v; return;
        case LikelihoodKind::StudentT: raw_scale = v; return;
        case LikelihoodKind::Bernoulli: break;
    }
    throw ArgumentError("likelihood has no trainable parameter");
}

// ---- Gauss-Hermite ----

const QuadRule& gauss_hermite(int order) {
    if (order < 1 || order > 256) throw ArgumentError("quadrature order out of range");
    static std::map<int, QuadRule> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(order);
    if (it != cache.end()) return it->second;

    // Golub-Welsch on the symmetric Jacobi matrix of the Hermite recurrence.
    Mat J = Mat::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        const double b = std::sqrt(k / 2.0);
        J(k, k - 1) = b;
        J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(J);
    if (es.info() != Eigen::Success) throw NumericalError("quadrature eigensolve failed");
    QuadRule rule;
    rule.nodes = es.eigenvalues();
    rule.weights.resize(order);
    for (int q = 0; q < order; ++q) {
        const double v0 = es.eigenvectors()(0, q);
        rule.weights[q] = kSqrtPi * v0 * v0;
    }
    return cache.emplace(order, std::move(rule)).first->second;
}

namespace {

void check_marginal(const GaussianMarginal& q) {
    if (!std::isfinite(q.mean) || !std::isfinite(q.variance))
        throw ArgumentError("marginal must be finite");
    if (q.variance < 0.0) throw ArgumentError("marginal variance must be nonnegative");
}

double check_label(double y) {
    if (y != 1.0 && y != -1.0)
        throw ArgumentError("bernoulli labels must be +1 or -1");
    return y;
}

// log p(y | f) for student-t with location f.
struct StudentTLogPdf {
    double nu, sigma, log_const;
    StudentTLogPdf(double nu_, double sigma_) : nu(nu_), sigma(sigma_) {
        log_const = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) -
                    0.5 * std::log(nu * M_PI * sigma * sigma);
    }
    double operator()(double y, double f) const {
        const double r = y - f;
        return log_const - 0.5 * (nu + 1.0) * std::log1p(r * r / (nu * sigma * sigma));
    }
    double d_f(double y, double f) const {
        const double r = y - f;
        return (nu + 1.0) * r / (nu * sigma * sigma + r * r);
    }
    double d_sigma(double y, double f) const {
        const double r = y - f;
        return -1.0 / sigma + (nu + 1.0) * r * r / (sigma * (nu * sigma * sigma + r * r));
    }
};

} // namespace

double expected_log_lik(const LikelihoodParams& lik, const GaussianMarginal& q, double y,
                        EllGrad* grad) {
    check_marginal(q);
    if (!std::isfinite(y)) throw ArgumentError("target must be finite");
    const double mu = q.mean, v = q.variance;

    switch (lik.kind) {
        case LikelihoodKind::Gaussian: {
            const double s2 = lik.noise();
            const double r = y - mu;
            const double ell = -0.5 * (kLog2Pi + std::log(s2)) - (r * r + v) / (2.0 * s2);
            if (grad) {
                grad->d_mean = r / s2;
                grad->d_var = -0.5 / s2;
                const double d_s2 = -0.5 / s2 + (r * r + v) / (2.0 * s2 * s2);
                grad->d_raw = d_s2 * sigmoid(lik.raw_noise);
            }
            return ell;
        }
        case LikelihoodKind::Bernoulli: {
            check_label(y);
            if (v == 0.0) {
                const double z = y * mu;
                const double ell = log_norm_cdf(z);
                if (grad) {
                    const double r = norm_pdf_over_cdf(z);
                    grad->d_mean = y * r;
                    grad->d_var = 0.5 * (-z * r - r * r); // half the second derivative
                    grad->d_raw = 0.0;
                }
                return ell;
            }
            const QuadRule& rule = gauss_hermite(lik.quad_order);
            const double step = std::sqrt(2.0 * v);
            double ell = 0.0, dm = 0.0, dv = 0.0;
            for (int qi = 0; qi < rule.nodes.size(); ++qi) {
                const double w = rule.weights[qi] / kSqrtPi;
                const double x = rule.nodes[qi];
                const double z = y * (mu + step * x);
                ell += w * log_norm_cdf(z);
                if (grad) {
                    const double g = y * norm_pdf_over_cdf(z);
                    dm += w * g;
                    dv += w * g * x / step;
                }
            }
            if (grad) {
                grad->d_mean = dm;
                grad->d_var = dv;
                grad->d_raw = 0.0;
            }
            return ell;
        }
        case LikelihoodKind::StudentT: {
            const StudentTLogPdf pdf(lik.dof, lik.scale());
            if (v == 0.0) {
                if (grad) {
                    grad->d_mean = pdf.d_f(y, mu);
                    const double h = 1e-5; // half of d2/df2 by central differences
                    grad->d_var = 0.25 * (pdf.d_f(y, mu + h) - pdf.d_f(y, mu - h)) / h;
                    grad->d_raw = pdf.d_sigma(y, mu) * sigmoid(lik.raw_scale);
                }
                return pdf(y, mu);
            }
            const QuadRule& rule = gauss_hermite(lik.quad_order);
            const double step = std::sqrt(2.0 * v);
            double ell = 0.0, dm = 0.0, dv = 0.0, ds = 0.0;
            for (int qi = 0; qi < rule.nodes.size(); ++qi) {
                const double w = rule.weights[qi] / kSqrtPi;
                const double x = rule.nodes[qi];
                const double f = mu + step * x;
                ell += w * pdf(y, f);
                if (grad) {
                    const double g = pdf.d_f(y, f);
                    dm += w * g;
                    dv += w * g * x / step;
                    ds += w * pdf.d_sigma(y, f);
                }
            }
            if (grad) {
                grad->d_mean = dm;
                grad->d_var = dv;
                grad->d_raw = ds * sigmoid(lik.raw_scale);
            }
            return ell;
        }
    }
    throw ArgumentError("unknown likelihood kind");
}

double predictive_nll(const LikelihoodParams& lik, const GaussianMarginal& q, double y) {
    check_marginal(q);
    if (!std::isfinite(y)) throw ArgumentError("target must be finite");
    const double mu = q.mean, v = q.variance;

    switch (lik.kind) {
        case LikelihoodKind::Gaussian: {
            const double total = lik.noise() + v;
            const double r = y - mu;
            return 0.5 * (kLog2Pi + std::log(total)) + r * r / (2.0 * total);
        }
        case LikelihoodKind::Bernoulli: {
            check_label(y);
            return -log_norm_cdf(y * mu / std::sqrt(1.0 + v));
        }
        case LikelihoodKind::StudentT: {
            const StudentTLogPdf pdf(lik.dof, lik.scale());
            if (v == 0.0) return -pdf(y, mu);
            const QuadRule& rule = gauss_hermite(lik.quad_order);
            const double step = std::sqrt(2.0 * v);
            // log of the quadrature mixture, stabilized around the max term
            double max_lp = -std::numeric_limits<double>::infinity();
            Vec lps(rule.nodes.size());
            for (int qi = 0; qi < rule.nodes.size(); ++qi) {
                lps[qi] = pdf(y, mu + step * rule.nodes[qi]);
                max_lp = std::max(max_lp, lps[qi]);
            }
            double acc = 0.0;
            for (int qi = 0; qi < rule.nodes.size(); ++qi)
                acc += rule.weights[qi] / kSqrtPi * std::exp(lps[qi] - max_lp);
            return -(max_lp + std::log(acc));
        }
    }
    throw ArgumentError("unknown likelihood kind");
}

double probit_predictive_prob(const GaussianMarginal& q) {
    check_marginal(q);
    return norm_cdf(q.mean / std::sqrt(1.0 + q.variance));
}

} // namespace vnngp
