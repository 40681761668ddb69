#include "vnngp/kernel.hpp"

#include <cmath>

#include "vnngp/errors.hpp"

namespace vnngp {

namespace {

constexpr double kSqrt5 = 2.2360679774997896964;

double scaled_sqdist(const KernelParams& p, const Vec& x, const Vec& x2, const Vec& ls) {
    double r2 = 0.0;
    for (int d = 0; d < p.dim(); ++d) {
        double u = (x[d] - x2[d]) / ls[d];
        r2 += u * u;
    }
    return r2;
}

void check_dim(const KernelParams& p, const Vec& x, const char* what) {
    if (x.size() != p.dim()) {
        throw ArgumentError(std::string("kernel: ") + what + " has dimension " +
                            std::to_string(x.size()) + ", expected " + std::to_string(p.dim()));
    }
}

} // namespace

std::string to_string(KernelKind kind) {
    return kind == KernelKind::SquaredExponential ? "se" : "matern52";
}

KernelKind kernel_kind_from_string(const std::string& name) {
    if (name == "se" || name == "rbf" || name == "squared_exponential") {
        return KernelKind::SquaredExponential;
    }
    if (name == "matern52") return KernelKind::Matern52;
    throw ArgumentError("unknown kernel kind '" + name + "' (expected se or matern52)");
}

KernelParams KernelParams::make(KernelKind kind, const Vec& lengthscales, double outputscale) {
    if (lengthscales.size() == 0) {
        throw ArgumentError("kernel: lengthscale vector is empty");
    }
    for (int d = 0; d < lengthscales.size(); ++d) {
        if (!(lengthscales[d] > 0.0) || !std::isfinite(lengthscales[d])) {
            throw ArgumentError("kernel: lengthscale[" + std::to_string(d) +
                                "] must be positive and finite");
        }
    }
    if (!(outputscale >= 0.0) || !std::isfinite(outputscale)) {
        throw ArgumentError("kernel: outputscale must be nonnegative and finite");
    }
    KernelParams p;
    p.kind = kind;
    p.raw_lengthscales = lengthscales.unaryExpr([](double v) { return inv_softplus(v); });
    p.raw_outputscale = inv_softplus(outputscale);
    return p;
}

Vec KernelParams::lengthscales() const {
    return raw_lengthscales.unaryExpr([](double v) { return softplus(v); });
}

double kernel_eval(const KernelParams& p, const Vec& x, const Vec& x2) {
    check_dim(p, x, "x");
    check_dim(p, x2, "x2");
    const Vec ls = p.lengthscales();
    const double os = p.outputscale();
    const double r2 = scaled_sqdist(p, x, x2, ls);
    if (p.kind == KernelKind::SquaredExponential) {
        return os * std::exp(-0.5 * r2);
    }
    if (r2 == 0.0) return os;
    const double u = kSqrt5 * std::sqrt(r2);
    return os * (1.0 + u + u * u / 3.0) * std::exp(-u);
}

Mat kernel_cross(const KernelParams& p, const Mat& A, const Mat& B) {
    Mat K;
    kernel_cross_into(p, A, B, K, nullptr);
    return K;
}

KernelCtx make_kernel_ctx(const KernelParams& p) {
    KernelCtx c;
    c.ls = p.lengthscales();
    c.os = p.outputscale();
    c.c52 = (5.0 / 3.0) * c.os;
    const int D = p.dim();
    c.inv_l3.resize(D);
    c.sig_raw.resize(D + 1);
    for (int d = 0; d < D; ++d) {
        c.inv_l3[d] = 1.0 / (c.ls[d] * c.ls[d] * c.ls[d]);
        c.sig_raw[d] = sigmoid(p.raw_lengthscales[d]);
    }
    c.sig_raw[D] = sigmoid(p.raw_outputscale);
    return c;
}

void kernel_cross_into(const KernelParams& p, const Mat& A, const Mat& B, Mat& K,
                       GramWork* work) {
    kernel_cross_into(p, make_kernel_ctx(p), A, B, K, work);
}

void kernel_cross_into(const KernelParams& p, const KernelCtx& ctx, const Mat& A,
                       const Mat& B, Mat& K, GramWork* work) {
    if (A.rows() > 0 && A.cols() != p.dim()) {
        throw ArgumentError("kernel_cross: A has dimension " + std::to_string(A.cols()) +
                            ", expected " + std::to_string(p.dim()));
    }
    if (B.rows() > 0 && B.cols() != p.dim()) {
        throw ArgumentError("kernel_cross: B has dimension " + std::to_string(B.cols()) +
                            ", expected " + std::to_string(p.dim()));
    }
    K.resize(A.rows(), B.rows());
    if (K.size() == 0) {
        if (work) {
            work->E.resize(A.rows(), B.rows());
            if (p.kind == KernelKind::Matern52) work->U.resize(A.rows(), B.rows());
        }
        return;
    }
    const Vec& ls = ctx.ls;
    const double os = ctx.os;
    const int D = p.dim();
    // pass 1: scaled square distances, in difference form so nearby points
    // stay exact (expanding the square would cancel catastrophically); one
    // column at a time so the subtract/divide/square chain vectorizes
    for (Eigen::Index b = 0; b < B.rows(); ++b) {
        auto col = K.col(b).array();
        col = ((A.col(0).array() - B(b, 0)) / ls[0]).square();
        for (int d = 1; d < D; ++d) {
            col += ((A.col(d).array() - B(b, d)) / ls[d]).square();
        }
    }
    // pass 2: the transcendentals over the whole block at once, which lets
    // them vectorize; r2 = 0 needs no special case since sqrt and exp send
    // it to u = 0, e = 1 exactly
    if (p.kind == KernelKind::SquaredExponential) {
        if (work) {
            work->E = (K.array() * -0.5).exp().matrix();
            K = os * work->E;
        } else {
            K = (K.array() * -0.5).exp().matrix() * os;
        }
    } else {
        Mat u_local, e_local;
        Mat& U = work ? work->U : u_local;
        Mat& E = work ? work->E : e_local;
        U = K.array().sqrt().matrix() * kSqrt5;
        E = (-U.array()).exp().matrix();
        K = ((os * (1.0 + U.array() + U.array() * U.array() / 3.0)) * E.array()).matrix();
    }
}

void kernel_gram_backward(const KernelParams& p, const KernelCtx& ctx, const Mat& A,
                          const Mat& B, GramWork& work, const Vec& u, const Vec& v,
                          double weight, Eigen::Ref<Vec> grad) {
    if (u.size() != A.rows() || v.size() != B.rows())
        throw ArgumentError("kernel_gram_backward: adjoint shape does not match the block");
    if (work.E.rows() != A.rows() || work.E.cols() != B.rows())
        throw ArgumentError("kernel_gram_backward: stale gram work for this block");
    if (grad.size() != p.n_raw())
        throw ArgumentError("kernel_gram_backward: grad has length " +
                            std::to_string(grad.size()) + ", expected " +
                            std::to_string(p.n_raw()));
    if (u.size() == 0 || v.size() == 0) return;
    const int D = p.dim();
    const bool se = p.kind == KernelKind::SquaredExponential;
    work.acc.resize(D + 1);
    work.acc.setZero();
    Vec& acc = work.acc;
    for (Eigen::Index a = 0; a < A.rows(); ++a) {
        const double ua = u[a];
        if (ua == 0.0) continue;
        for (Eigen::Index b = 0; b < B.rows(); ++b) {
            const double w = ua * v[b];
            if (w == 0.0) continue;
            const double e = work.E(a, b);
            double c, g;
            if (se) {
                c = w * ctx.os * e; // w * k
                g = e;
            } else {
                const double uu = work.U(a, b);
                c = w * ctx.c52 * (1.0 + uu) * e;
                g = (1.0 + uu + uu * uu / 3.0) * e;
            }
            for (int d = 0; d < D; ++d) {
                const double diff = A(a, d) - B(b, d);
                acc[d] += c * diff * diff * ctx.inv_l3[d];
            }
            acc[D] += w * g;
        }
    }
    for (int d = 0; d < D; ++d) grad[d] += weight * acc[d] * ctx.sig_raw[d];
    grad[D] += weight * acc[D] * ctx.sig_raw[D];
}

void kernel_grad_accumulate(const KernelParams& p, const Vec& x, const Vec& x2,
                            double weight, Eigen::Ref<Vec> grad) {
    check_dim(p, x, "x");
    check_dim(p, x2, "x2");
    if (grad.size() != p.n_raw()) {
        throw ArgumentError("kernel_grad_accumulate: grad has length " +
                            std::to_string(grad.size()) + ", expected " +
                            std::to_string(p.n_raw()));
    }
    const Vec ls = p.lengthscales();
    const double os = p.outputscale();
    const int D = p.dim();
    const double r2 = scaled_sqdist(p, x, x2, ls);

    if (p.kind == KernelKind::SquaredExponential) {
        const double k = os * std::exp(-0.5 * r2);
        for (int d = 0; d < D; ++d) {
            const double diff = x[d] - x2[d];
            const double dk_dl = k * diff * diff / (ls[d] * ls[d] * ls[d]);
            grad[d] += weight * dk_dl * sigmoid(p.raw_lengthscales[d]);
        }
        grad[D] += weight * std::exp(-0.5 * r2) * sigmoid(p.raw_outputscale);
        return;
    }

    // Matern 5/2: dk/dl_d = (5/3) os (1 + sqrt5 r) e^{-sqrt5 r} diff_d^2 / l_d^3
    const double u = kSqrt5 * std::sqrt(r2);
    const double e = std::exp(-u);
    const double common = (5.0 / 3.0) * os * (1.0 + u) * e;
    for (int d = 0; d < D; ++d) {
        const double diff = x[d] - x2[d];
        const double dk_dl = common * diff * diff / (ls[d] * ls[d] * ls[d]);
        grad[d] += weight * dk_dl * sigmoid(p.raw_lengthscales[d]);
    }
    const double g = (r2 == 0.0) ? 1.0 : (1.0 + u + u * u / 3.0) * e;
    grad[D] += weight * g * sigmoid(p.raw_outputscale);
}

} // namespace vnngp
