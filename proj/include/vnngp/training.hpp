#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vnngp/errors.hpp"
#include "vnngp/kernel.hpp"
#include "vnngp/likelihood.hpp"
#include "vnngp/rng.hpp"
#include "vnngp/vnngp.hpp"

namespace vnngp {

enum class TrainMode { Full, VariationalOnly };

struct TrainConfig {
    int iterations = 3000;
    double lr = 0.01;
    int batch_data = 256;
    int batch_ip = 256;
    std::vector<double> milestones = {0.75, 0.9}; // fractions of iterations
    double decay = 0.1;
    std::uint64_t seed = 0;
    double gradient_clip = 0.0; // 0 disables clipping
    TrainMode mode = TrainMode::Full;

    void validate() const;
    double lr_at(int iter) const; // iter is 0-based
};

// Flat unconstrained parameter vector:
// [kernel raws | likelihood raw (if trainable) | m | raw_s | fullrank tril raw].
struct ParamLayout {
    int n_kernel = 0;
    int n_lik = 0;
    int M = 0;
    bool has_fullrank = false;

    static ParamLayout infer(const KernelParams& kp, const LikelihoodParams& lik,
                             const VariationalState& vs);
    int total() const;
    std::string name_of(int i) const;
};

Vec flatten(const ParamLayout& lay, const KernelParams& kp, const LikelihoodParams& lik,
            const VariationalState& vs);
void unflatten(const ParamLayout& lay, const Vec& theta, KernelParams& kp, LikelihoodParams& lik,
               VariationalState& vs);

// ---- Adam ----

struct AdamState {
    Vec m1;
    Vec m2;
    int t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(int n);
};

// One descent step on the given loss gradient (params are updated in place).
void adam_step(AdamState& st, Vec& params, const Vec& grad, double lr);

// ---- driver ----

struct TraceRow {
    int iteration = 0;
    double raw_loss = 0.0;
    double smoothed_loss = 0.0; // trailing window of 100 raw losses
    double lr = 0.0;
};

struct TrainResult {
    Vec params;
    std::vector<TraceRow> trace;
    int iterations_run = 0;
};

// loss(theta, grad_out, data_batch, ip_batch) returns the minibatch loss
// (negative stochastic ELBO) and fills grad_out when non-null.
using LossFn = std::function<double(const Vec&, Vec*, std::span<const int>, std::span<const int>)>;

// Epoch-wise sampling without replacement; reshuffles at each epoch boundary.
class BatchScheduler {
  public:
    BatchScheduler(int n, int batch, std::uint64_t seed);
    std::vector<int> next();
    int batch_size() const { return batch_; }

  private:
    int n_;
    int batch_;
    Rng rng_;
    std::vector<int> perm_;
    int pos_ = 0;
};

// Runs Adam with the multiplicative step schedule. A non-finite loss or
// gradient aborts with NumericalError naming the iteration (and parameter,
// via name_of); params revert to the last finite iterate before the throw.
TrainResult train_loop(const TrainConfig& cfg, Vec params, int n_data, int m_ip,
                       const LossFn& loss,
                       const std::function<std::string(int)>& name_of = {});

// Central finite differences, used to validate analytic gradients.
Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& theta, double h = 1e-5);

} // namespace vnngp
