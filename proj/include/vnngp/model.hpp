#pragma once

#include <optional>
#include <string>

#include "vnngp/baselines.hpp"
#include "vnngp/data.hpp"
#include "vnngp/training.hpp"

namespace vnngp {

enum class Method { Vnngp, Svgp, Swsgp, Exact };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

// A trained model plus everything prediction needs. Inputs and targets are
// stored standardized; predictions are mapped back to the original scale.
struct Model {
    Method method = Method::Vnngp;
    KernelParams kernel = KernelParams::make(KernelKind::SquaredExponential, Vec::Ones(1), 1.0);
    LikelihoodParams lik = LikelihoodParams::gaussian(1.0);
    Standardizer std;

    // sparse methods
    Mat Z; // ordered (VNNGP) or plain (SVGP / SWSGP) inducing locations
    int K = 0;
    VariationalState vs;

    // exact GP
    Mat X_train;
    Vec y_train;
};

struct FitOptions {
    Method method = Method::Vnngp;
    KernelKind kernel = KernelKind::SquaredExponential;
    LikelihoodKind likelihood = LikelihoodKind::Gaussian;
    double student_t_dof = 4.0;
    int K = 10;
    int M = 0; // 0: VNNGP/SWSGP use M = N, SVGP uses min(1024, N)
    TrainConfig train;
};

struct FitResult {
    Model model;
    std::vector<TraceRow> trace;
    double final_objective = 0.0;
};

FitResult fit_model(const Dataset& train_std, const Standardizer& std_info,
                    const FitOptions& opts);

// Predictive moments and per-point NLL on the original target scale.
struct Prediction {
    Vec mean;
    Vec variance;
    Vec nll;
};

Prediction model_predict(const Model& model, const Mat& X_original, const Vec& y_original);
Prediction model_predict(const Model& model, const Mat& X_original);

struct EvalMetrics {
    double rmse = 0.0;
    double mean_nll = 0.0;
    double accuracy = 0.0; // Bernoulli only; sign agreement
    int n = 0;
};

EvalMetrics evaluate(const Model& model, const Dataset& test_original);

// Versioned JSON serialization; raw (unconstrained) parameters are the
// stored representation.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

} // namespace vnngp
