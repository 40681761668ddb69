#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vnngp/kernel.hpp"
#include "vnngp/mathutil.hpp"

namespace vnngp {

struct Dataset {
    Mat X;
    Vec y;
    std::vector<std::string> feature_names;
    int n() const { return static_cast<int>(X.rows()); }
    int d() const { return static_cast<int>(X.cols()); }
};

struct LoadReport {
    Dataset data;
    int rows_dropped = 0; // rows containing non-finite values
};

// Numeric CSV with a header row; `target` names the target column (empty:
// last column). Lines starting with '#' are comments. Ragged rows or
// non-numeric fields raise IngestionError. With bernoulli_labels, targets
// {0,1} are mapped to {-1,+1} and anything else is rejected.
LoadReport load_csv(const std::string& path, const std::string& target = "",
                    bool bernoulli_labels = false);

struct SplitResult {
    Dataset train;
    Dataset val;
    Dataset test;
};

// Shuffles with the seed, then apportions counts by largest remainder so
// the three parts always sum to n.
SplitResult split(const Dataset& ds, double frac_train, double frac_val, double frac_test,
                  std::uint64_t seed);

// Per-column standardization fit on training data only. Population std;
// a constant column keeps std 1 so it is centered but not scaled.
struct Standardizer {
    Vec x_mean;
    Vec x_std;
    double y_mean = 0.0;
    double y_std = 1.0;
    bool standardize_y = true;

    static Standardizer fit(const Dataset& train, bool standardize_y);
    Mat transform_x(const Mat& X) const;
    Vec transform_y(const Vec& y) const;
    double mean_to_original(double mu_std) const { return mu_std * y_std + y_mean; }
    double var_to_original(double var_std) const { return var_std * y_std * y_std; }
    double nll_to_original(double nll_std) const { return nll_std + std::log(y_std); }
};

// Draws f ~ GP(0, k) at the given inputs via a dense Cholesky (small jitter
// on the diagonal), then adds N(0, noise) observation noise. An outputscale
// of zero short-circuits to pure noise.
Vec sample_gp(const KernelParams& kp, const Mat& X, double noise, std::uint64_t seed);

} // namespace vnngp
