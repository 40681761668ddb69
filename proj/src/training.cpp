#include "vnngp/training.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace vnngp {

void TrainConfig::validate() const {
    if (iterations < 0) throw ArgumentError("iterations must be nonnegative");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ArgumentError("learning rate must be positive");
    if (batch_data < 1 || batch_ip < 1) throw ArgumentError("batch sizes must be positive");
    if (!(decay > 0.0) || decay > 1.0) throw ArgumentError("decay must be in (0, 1]");
    if (gradient_clip < 0.0) throw ArgumentError("gradient clip must be nonnegative");
    for (size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] < 0.0 || milestones[i] > 1.0)
            throw ArgumentError("milestones must be fractions in [0, 1]");
        if (i > 0 && milestones[i] < milestones[i - 1])
            throw ArgumentError("milestones must be nondecreasing");
    }
}

double TrainConfig::lr_at(int iter) const {
    double out = lr;
    for (double frac : milestones) {
        const int at = static_cast<int>(std::floor(frac * iterations));
        if (iter >= at && iterations > 0) out *= decay;
    }
    return out;
}

// ---- parameter layout ----

ParamLayout ParamLayout::infer(const KernelParams& kp, const LikelihoodParams& lik,
                               const VariationalState& vs) {
    ParamLayout lay;
    lay.n_kernel = kp.n_raw();
    lay.n_lik = lik.has_trainable() ? 1 : 0;
    lay.M = vs.size();
    lay.has_fullrank = vs.has_fullrank();
    return lay;
}

int ParamLayout::total() const {
    return n_kernel + n_lik + 2 * M + (has_fullrank ? M * (M + 1) / 2 : 0);
}

std::string ParamLayout::name_of(int i) const {
    if (i < 0 || i >= total()) throw ArgumentError("parameter index out of range");
    if (i < n_kernel - 1) return "lengthscale[" + std::to_string(i) + "]";
    if (i < n_kernel) return "outputscale";
    i -= n_kernel;
    if (i < n_lik) return "likelihood";
    i -= n_lik;
    if (i < M) return "m[" + std::to_string(i) + "]";
    i -= M;
    if (i < M) return "raw_s[" + std::to_string(i) + "]";
    i -= M;
    // row-major lower triangle
    int r = 0;
    while (i > r) {
        i -= r + 1;
        ++r;
    }
    return "Ltilde[" + std::to_string(r) + "," + std::to_string(i) + "]";
}

Vec flatten(const ParamLayout& lay, const KernelParams& kp, const LikelihoodParams& lik,
            const VariationalState& vs) {
    if (kp.n_raw() != lay.n_kernel || vs.size() != lay.M ||
        (lik.has_trainable() ? 1 : 0) != lay.n_lik || vs.has_fullrank() != lay.has_fullrank)
        throw ArgumentError("layout does not match parameters");
    Vec theta(lay.total());
    int at = 0;
    theta.segment(at, kp.dim()) = kp.raw_lengthscales;
    at += kp.dim();
    theta[at++] = kp.raw_outputscale;
    if (lay.n_lik) theta[at++] = lik.trainable_raw();
    theta.segment(at, lay.M) = vs.m;
    at += lay.M;
    theta.segment(at, lay.M) = vs.raw_s;
    at += lay.M;
    if (lay.has_fullrank) {
        const Mat& raw = *vs.fullrank_raw;
        for (int r = 0; r < lay.M; ++r)
            for (int c = 0; c <= r; ++c) theta[at++] = raw(r, c);
    }
    return theta;
}

void unflatten(const ParamLayout& lay, const Vec& theta, KernelParams& kp, LikelihoodParams& lik,
               VariationalState& vs) {
    if (theta.size() != lay.total()) throw ArgumentError("parameter vector length mismatch");
    if (kp.n_raw() != lay.n_kernel) throw ArgumentError("kernel layout mismatch");
    int at = 0;
    kp.raw_lengthscales = theta.segment(at, kp.dim());
    at += kp.dim();
    kp.raw_outputscale = theta[at++];
    if (lay.n_lik) lik.set_trainable_raw(theta[at++]);
    vs.m = theta.segment(at, lay.M);
    at += lay.M;
    vs.raw_s = theta.segment(at, lay.M);
    at += lay.M;
    if (lay.has_fullrank) {
        Mat raw = Mat::Zero(lay.M, lay.M);
        for (int r = 0; r < lay.M; ++r)
            for (int c = 0; c <= r; ++c) raw(r, c) = theta[at++];
        vs.fullrank_raw = std::move(raw);
    } else {
        vs.fullrank_raw.reset();
    }
}

// ---- Adam ----

AdamState AdamState::init(int n) {
    AdamState st;
    st.m1 = Vec::Zero(n);
    st.m2 = Vec::Zero(n);
    return st;
}

void adam_step(AdamState& st, Vec& params, const Vec& grad, double lr) {
    if (params.size() != st.m1.size() || grad.size() != st.m1.size())
        throw ArgumentError("adam state size mismatch");
    st.t += 1;
    st.m1 = st.beta1 * st.m1 + (1.0 - st.beta1) * grad;
    st.m2 = st.beta2 * st.m2 + (1.0 - st.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(st.beta1, st.t);
    const double c2 = 1.0 - std::pow(st.beta2, st.t);
    for (int i = 0; i < params.size(); ++i) {
        const double mhat = st.m1[i] / c1;
        const double vhat = st.m2[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

// ---- batching ----

BatchScheduler::BatchScheduler(int n, int batch, std::uint64_t seed)
    : n_(n), batch_(std::min(batch, n)), rng_(seed) {
    if (n < 1) throw ArgumentError("scheduler needs a nonempty population");
    if (batch < 1) throw ArgumentError("batch size must be positive");
    perm_ = rng_.permutation(n_);
}

std::vector<int> BatchScheduler::next() {
    if (pos_ + batch_ > n_) {
        perm_ = rng_.permutation(n_);
        pos_ = 0;
    }
    std::vector<int> out(perm_.begin() + pos_, perm_.begin() + pos_ + batch_);
    pos_ += batch_;
    return out;
}

// ---- driver ----

TrainResult train_loop(const TrainConfig& cfg, Vec params, int n_data, int m_ip,
                       const LossFn& loss, const std::function<std::string(int)>& name_of) {
    cfg.validate();
    AdamState adam = AdamState::init(static_cast<int>(params.size()));
    BatchScheduler data_sched(n_data, cfg.batch_data, derive_seed(cfg.seed, 1));
    BatchScheduler ip_sched(m_ip, cfg.batch_ip, derive_seed(cfg.seed, 2));

    TrainResult res;
    res.trace.reserve(cfg.iterations);
    std::deque<double> window;
    double window_sum = 0.0;
    Vec grad(params.size());

    for (int t = 0; t < cfg.iterations; ++t) {
        const auto data_batch = data_sched.next();
        const auto ip_batch = ip_sched.next();
        const Vec prev = params;
        const double lr = cfg.lr_at(t);
        const double raw = loss(params, &grad, data_batch, ip_batch);
        if (!std::isfinite(raw)) {
            res.params = prev; // last finite iterate
            throw NumericalError("non-finite loss at iteration " + std::to_string(t));
        }
        for (int i = 0; i < grad.size(); ++i) {
            if (!std::isfinite(grad[i])) {
                res.params = prev;
                const std::string pname = name_of ? name_of(i) : std::to_string(i);
                throw NumericalError("non-finite gradient for parameter " + pname +
                                     " at iteration " + std::to_string(t));
            }
        }
        if (cfg.gradient_clip > 0.0) {
            const double norm = grad.norm();
            if (norm > cfg.gradient_clip) grad *= cfg.gradient_clip / norm;
        }
        window.push_back(raw);
        window_sum += raw;
        if (window.size() > 100) {
            window_sum -= window.front();
            window.pop_front();
        }
        res.trace.push_back({t, raw, window_sum / static_cast<double>(window.size()), lr});
        adam_step(adam, params, grad, lr);
        res.iterations_run = t + 1;
    }
    res.params = std::move(params);
    return res;
}

Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& theta, double h) {
    Vec g(theta.size());
    Vec t = theta;
    for (int i = 0; i < theta.size(); ++i) {
        const double orig = t[i];
        t[i] = orig + h;
        const double up = f(t);
        t[i] = orig - h;
        const double dn = f(t);
        t[i] = orig;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

} // namespace vnngp
