#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vnngp/model.hpp"

namespace vnngp {

// Runners are pure functions of (config, seed): rerunning one overwrites its
// CSV outputs with byte-identical content. Every CSV starts with a '#'
// header comment naming the columns.

struct FigPrecisionConfig {
    int M = 20;
    double spacing = 1.0;
    double lengthscale = 1.0;
    double outputscale = 1.0;
    std::vector<int> ks = {1, 2, 10, 19};
    std::string out_dir = ".";
};

struct FigPrecisionResult {
    std::vector<int> ks;
    std::vector<int> max_row_nnz;
    std::vector<double> frobenius_error; // || L'L - K^{-1} ||_F / || K^{-1} ||_F
};

FigPrecisionResult run_fig_precision(const FigPrecisionConfig& cfg);

struct FigKlConfig {
    int M = 20;
    double spacing = 1.0;
    double outputscale = 1.0;
    std::vector<double> lengthscales = {1.0, 5.0, 25.0};
    double mean_sample_lengthscale = 5.0; // variational means drawn from this GP
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

struct FigKlRow {
    double lengthscale = 0.0;
    int K = 0;
    double kl_vnngp = 0.0;
    double kl_swsgp_subset = 0.0; // mean over per-point unconstrained subsets
    double kl_exact = 0.0;
};

std::vector<FigKlRow> run_fig_kl(const FigKlConfig& cfg);

struct OverfitConfig {
    int K = 5;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    // generative process: two dense clusters plus a handful of mid points
    int n_cluster = 22;
    int n_mid = 6;
    double lengthscale = 5.0;
    double outputscale = 5.0;
    double noise = 5.0;
    double grid_lo = -10.0;
    double grid_hi = 60.0;
    double grid_step = 0.25;
};

struct OverfitResult {
    Vec grid;
    Vec exact_mean, exact_sd;
    Vec svgp_mean, svgp_sd;
    Vec vnngp_mean, vnngp_sd;
    Vec swsgp_mean, swsgp_sd;
    double rmse_vnngp_vs_exact = 0.0;
    double rmse_swsgp_vs_exact = 0.0;
    double rmse_svgp_vs_exact = 0.0;
};

OverfitResult run_overfit_sim(const OverfitConfig& cfg);

struct NoiseSweepConfig {
    int n_train = 2000;
    int n_test = 2000;
    int K = 10;
    int svgp_m = 256;
    double true_noise = 0.1;
    std::vector<double> noise_grid; // default: 7-point log grid on [1e-3, 1]
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

struct NoiseSweepRow {
    double noise = 0.0;
    double neg_elbo_vnngp = 0.0, test_nll_vnngp = 0.0;
    double neg_elbo_svgp = 0.0, test_nll_svgp = 0.0;
    double neg_elbo_swsgp = 0.0, test_nll_swsgp = 0.0;
};

struct NoiseSweepResult {
    std::vector<NoiseSweepRow> rows;
    double argmin_noise_vnngp = 0.0;
    double argmin_noise_svgp = 0.0;
    double argmin_noise_swsgp = 0.0;
};

NoiseSweepResult run_noise_sweep(const NoiseSweepConfig& cfg);

struct BenchConfig {
    std::string csv_path;
    std::string target; // empty: last column
    FitOptions fit;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string model_path; // default <out_dir>/model.json
};

struct RunReport {
    std::map<std::string, std::string> config_echo;
    EvalMetrics metrics;
    std::map<std::string, double> learned; // constrained hyperparameters
    double wall_clock_sec = 0.0;
    std::uint64_t seed = 0;
};

RunReport run_benchmark(const BenchConfig& cfg);

void write_report_json(const RunReport& rep, const std::string& path);
RunReport read_report_json(const std::string& path);

// iteration,raw_loss,smoothed_loss,lr under a '#' header comment.
void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& dir,
                     const std::string& name = "trace.csv");

// Closed-form optimum of the ELBO over (m, s) at fixed hyperparameters for
// the Gaussian likelihood (the objective is quadratic in m and separable in
// s). Used by the fixed-hyperparameter runners; equivalent to running the
// variational-only optimizer to convergence.
VariationalState solve_variational_gaussian_vnngp(const KernelParams& kp, double noise,
                                                  const Mat& Zord, const NeighborIndex& idx,
                                                  const Mat& X, const Vec& y,
                                                  const MomentCache& cache);
VariationalState solve_variational_gaussian_svgp(const KernelParams& kp, double noise,
                                                 const Mat& Z, const Mat& X, const Vec& y);
VariationalState solve_variational_gaussian_swsgp(const KernelParams& kp, double noise,
                                                  const Mat& Z,
                                                  const std::vector<std::vector<int>>& data_nn,
                                                  const Mat& X, const Vec& y);

} // namespace vnngp
