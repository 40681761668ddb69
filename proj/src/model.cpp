#include "vnngp/model.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "vnngp/errors.hpp"

namespace vnngp {

using nlohmann::json;

std::string to_string(Method m) {
    switch (m) {
        case Method::Vnngp: return "vnngp";
        case Method::Svgp: return "svgp";
        case Method::Swsgp: return "swsgp";
        case Method::Exact: return "exact";
    }
    throw ArgumentError("unknown method");
}

Method method_from_string(const std::string& s) {
    if (s == "vnngp") return Method::Vnngp;
    if (s == "svgp") return Method::Svgp;
    if (s == "swsgp") return Method::Swsgp;
    if (s == "exact") return Method::Exact;
    throw ArgumentError("unknown method: " + s);
}

// ---- fitting ----

namespace {

LikelihoodParams init_likelihood(const FitOptions& opts) {
    switch (opts.likelihood) {
        case LikelihoodKind::Gaussian: return LikelihoodParams::gaussian(0.6931);
        case LikelihoodKind::Bernoulli: return LikelihoodParams::bernoulli();
        case LikelihoodKind::StudentT:
            return LikelihoodParams::student_t(opts.student_t_dof, 0.6931);
    }
    throw ArgumentError("unknown likelihood kind");
}

void map_elbo_grad(const ElboGrad& eg, const ParamLayout& lay, bool variational_only, Vec& g) {
    g.segment(0, lay.n_kernel) = -eg.d_kernel_raw;
    if (lay.n_lik) g[lay.n_kernel] = -eg.d_lik_raw;
    g.segment(lay.n_kernel + lay.n_lik, lay.M) = -eg.d_m;
    g.segment(lay.n_kernel + lay.n_lik + lay.M, lay.M) = -eg.d_raw_s;
    if (variational_only) g.segment(0, lay.n_kernel + lay.n_lik).setZero();
}

} // namespace

FitResult fit_model(const Dataset& train_std, const Standardizer& std_info,
                    const FitOptions& opts) {
    const int N = train_std.n();
    const int D = train_std.d();
    if (N < 1 || D < 1) throw ArgumentError("training data must be nonempty");
    if (opts.likelihood == LikelihoodKind::Bernoulli)
        for (int i = 0; i < N; ++i)
            if (train_std.y[i] != 1.0 && train_std.y[i] != -1.0)
                throw ArgumentError("bernoulli training targets must be +-1");

    KernelParams kp = KernelParams::make(opts.kernel, Vec::Constant(D, 0.6931), 0.6931);
    LikelihoodParams lik = init_likelihood(opts);
    TrainConfig cfg = opts.train;
    cfg.validate();

    Model model;
    model.method = opts.method;
    model.std = std_info;

    if (opts.method == Method::Exact) {
        if (opts.likelihood != LikelihoodKind::Gaussian)
            throw UnsupportedError("exact GP supports the Gaussian likelihood only");
        if (N > kExactGpCap)
            throw UnsupportedError("exact GP capped at " + std::to_string(kExactGpCap) +
                                   " observations");
        model.X_train = train_std.X;
        model.y_train = train_std.y;
        FitResult res;
        if (cfg.mode == TrainMode::Full && cfg.iterations > 0) {
            Vec params(kp.n_raw() + 1);
            params.head(kp.dim()) = kp.raw_lengthscales;
            params[kp.dim()] = kp.raw_outputscale;
            params[kp.n_raw()] = lik.raw_noise;
            auto loss = [&](const Vec& theta, Vec* g, std::span<const int>,
                            std::span<const int>) {
                KernelParams k2 = kp;
                k2.raw_lengthscales = theta.head(k2.dim());
                k2.raw_outputscale = theta[k2.dim()];
                Vec lg;
                const double ml = exact_log_marginal(k2, theta[k2.n_raw()], train_std.X,
                                                     train_std.y, g ? &lg : nullptr);
                if (g) *g = -lg;
                return -ml;
            };
            auto namer = [&](int i) {
                if (i < kp.dim()) return "lengthscale[" + std::to_string(i) + "]";
                return std::string(i == kp.dim() ? "outputscale" : "likelihood");
            };
            TrainResult tr = train_loop(cfg, params, N, 1, loss, namer);
            kp.raw_lengthscales = tr.params.head(kp.dim());
            kp.raw_outputscale = tr.params[kp.dim()];
            lik.raw_noise = tr.params[kp.n_raw()];
            res.trace = std::move(tr.trace);
            res.final_objective = res.trace.empty() ? 0.0 : res.trace.back().raw_loss;
        }
        model.kernel = kp;
        model.lik = lik;
        res.model = std::move(model);
        return res;
    }

    // sparse methods share the flattened-parameter training path
    int M = opts.M > 0 ? std::min(opts.M, N) : (opts.method == Method::Svgp ? std::min(1024, N) : N);
    if (opts.K < 1) throw ArgumentError("K must be positive");
    const int K = opts.K;

    const auto perm = Rng(derive_seed(cfg.seed, 3)).permutation(N);
    Mat Z(M, D);
    for (int j = 0; j < M; ++j) Z.row(j) = train_std.X.row(perm[j]);

    VariationalState vs = VariationalState::init_meanfield(M);
    const ParamLayout lay = ParamLayout::infer(kp, lik, vs);
    Vec params = flatten(lay, kp, lik, vs);
    const bool vonly = cfg.mode == TrainMode::VariationalOnly;

    NeighborIndex idx;
    std::vector<std::vector<int>> swsgp_nn;
    if (opts.method == Method::Vnngp) {
        idx = build_inducing_nn(Z, K);
        build_data_nn(idx, train_std.X, Z);
    } else if (opts.method == Method::Swsgp) {
        swsgp_nn.resize(N);
        for (int i = 0; i < N; ++i)
            swsgp_nn[i] = data_nn_for_point(Z, train_std.X.row(i).transpose(), K);
    }

    auto loss = [&](const Vec& theta, Vec* g, std::span<const int> db, std::span<const int> ib) {
        KernelParams k2 = kp;
        LikelihoodParams l2 = lik;
        VariationalState v2 = vs;
        unflatten(lay, theta, k2, l2, v2);
        ElboGrad eg;
        double total = 0.0;
        switch (opts.method) {
            case Method::Vnngp:
                total = elbo_stochastic(k2, l2, v2, Z, idx, train_std.X, train_std.y, db, ib,
                                        g ? &eg : nullptr)
                            .total;
                break;
            case Method::Svgp:
                total = svgp_elbo(k2, l2, v2, Z, train_std.X, train_std.y, db,
                                  g ? &eg : nullptr)
                            .total;
                break;
            case Method::Swsgp:
                total = swsgp_objective(k2, l2, v2, Z, swsgp_nn, train_std.X, train_std.y, db,
                                        g ? &eg : nullptr)
                            .total;
                break;
            case Method::Exact: throw ArgumentError("unreachable");
        }
        if (g) map_elbo_grad(eg, lay, vonly, *g);
        return -total;
    };

    TrainResult tr = train_loop(cfg, params, N, M, loss, [&](int i) { return lay.name_of(i); });
    unflatten(lay, tr.params, kp, lik, vs);

    model.kernel = kp;
    model.lik = lik;
    model.Z = std::move(Z);
    model.K = K;
    model.vs = std::move(vs);
    FitResult res;
    res.model = std::move(model);
    res.trace = std::move(tr.trace);
    res.final_objective = res.trace.empty() ? 0.0 : res.trace.back().raw_loss;
    return res;
}

// ---- prediction ----

namespace {

// Latent marginal in the standardized space.
std::vector<GaussianMarginal> latent_marginals(const Model& model, const Mat& Xs) {
    const int n = static_cast<int>(Xs.rows());
    std::vector<GaussianMarginal> out(n);
    switch (model.method) {
        case Method::Vnngp:
            for (int i = 0; i < n; ++i)
                out[i] = predict_point(model.kernel, model.lik, model.vs, model.Z, model.K,
                                       Xs.row(i).transpose())
                             .f;
            break;
        case Method::Svgp:
            out = svgp_predict_batch(model.kernel, model.vs, model.Z, Xs);
            break;
        case Method::Swsgp:
            for (int i = 0; i < n; ++i)
                out[i] = swsgp_predict_f(model.kernel, model.vs, model.Z, model.K,
                                         Xs.row(i).transpose());
            break;
        case Method::Exact: {
            const ExactPosterior post = exact_gp_posterior(
                model.kernel, model.lik, model.X_train, model.y_train);
            for (int i = 0; i < n; ++i)
                out[i] = exact_gp_predict(post, model.kernel, Xs.row(i).transpose());
            break;
        }
    }
    return out;
}

} // namespace

Prediction model_predict(const Model& model, const Mat& X_original, const Vec& y_original) {
    const bool have_y = y_original.size() > 0;
    if (have_y && y_original.size() != X_original.rows())
        throw ArgumentError("X and y disagree on N");
    const Mat Xs = model.std.transform_x(X_original);
    const auto latent = latent_marginals(model, Xs);
    const int n = static_cast<int>(Xs.rows());

    Prediction pred;
    pred.mean.resize(n);
    pred.variance.resize(n);
    pred.nll = have_y ? Vec(n) : Vec();

    for (int i = 0; i < n; ++i) {
        const GaussianMarginal& q = latent[i];
        switch (model.lik.kind) {
            case LikelihoodKind::Gaussian: {
                pred.mean[i] = model.std.mean_to_original(q.mean);
                pred.variance[i] = model.std.var_to_original(q.variance + model.lik.noise());
                if (have_y) {
                    const double ys = model.std.standardize_y
                                          ? (y_original[i] - model.std.y_mean) / model.std.y_std
                                          : y_original[i];
                    pred.nll[i] =
                        model.std.nll_to_original(predictive_nll(model.lik, q, ys));
                }
                break;
            }
            case LikelihoodKind::StudentT: {
                const double s = model.lik.scale();
                const double yvar =
                    model.lik.dof > 2.0 ? q.variance + model.lik.dof * s * s / (model.lik.dof - 2.0)
                                        : std::numeric_limits<double>::infinity();
                pred.mean[i] = model.std.mean_to_original(q.mean);
                pred.variance[i] = model.std.var_to_original(yvar);
                if (have_y) {
                    const double ys = model.std.standardize_y
                                          ? (y_original[i] - model.std.y_mean) / model.std.y_std
                                          : y_original[i];
                    pred.nll[i] =
                        model.std.nll_to_original(predictive_nll(model.lik, q, ys));
                }
                break;
            }
            case LikelihoodKind::Bernoulli: {
                const double p = probit_predictive_prob(q);
                pred.mean[i] = 2.0 * p - 1.0;
                pred.variance[i] = 1.0 - pred.mean[i] * pred.mean[i];
                if (have_y) pred.nll[i] = predictive_nll(model.lik, q, y_original[i]);
                break;
            }
        }
    }
    return pred;
}

Prediction model_predict(const Model& model, const Mat& X_original) {
    return model_predict(model, X_original, Vec());
}

EvalMetrics evaluate(const Model& model, const Dataset& test_original) {
    if (test_original.n() == 0) throw ArgumentError("evaluation set is empty");
    const Prediction pred = model_predict(model, test_original.X, test_original.y);
    EvalMetrics m;
    m.n = test_original.n();
    m.rmse = std::sqrt((pred.mean - test_original.y).squaredNorm() / m.n);
    m.mean_nll = pred.nll.mean();
    if (model.lik.kind == LikelihoodKind::Bernoulli) {
        int correct = 0;
        for (int i = 0; i < m.n; ++i) {
            const double sign = pred.mean[i] >= 0.0 ? 1.0 : -1.0;
            if (sign == test_original.y[i]) ++correct;
        }
        m.accuracy = static_cast<double>(correct) / m.n;
    }
    return m;
}

// ---- serialization ----

namespace {

json vec_to_json(const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vec vec_from_json(const json& a) {
    Vec v(a.size());
    for (size_t i = 0; i < a.size(); ++i) v[static_cast<int>(i)] = a[i].get<double>();
    return v;
}

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) rows.push_back(vec_to_json(m.row(r).transpose()));
    return rows;
}

Mat mat_from_json(const json& rows) {
    if (rows.empty()) return Mat();
    const int nr = static_cast<int>(rows.size());
    const int nc = static_cast<int>(rows[0].size());
    Mat m(nr, nc);
    for (int r = 0; r < nr; ++r) {
        if (static_cast<int>(rows[r].size()) != nc)
            throw IngestionError("ragged matrix in model file");
        for (int c = 0; c < nc; ++c) m(r, c) = rows[r][c].get<double>();
    }
    return m;
}

} // namespace

void save_model(const Model& model, const std::string& path) {
    json j;
    j["format"] = "vnngp-model";
    j["version"] = 1;
    j["method"] = to_string(model.method);
    j["kernel"] = {{"kind", to_string(model.kernel.kind)},
                   {"raw_lengthscales", vec_to_json(model.kernel.raw_lengthscales)},
                   {"raw_outputscale", model.kernel.raw_outputscale}};
    j["likelihood"] = {{"kind", to_string(model.lik.kind)},
                       {"raw_noise", model.lik.raw_noise},
                       {"raw_scale", model.lik.raw_scale},
                       {"dof", model.lik.dof},
                       {"quad_order", model.lik.quad_order}};
    j["standardizer"] = {{"x_mean", vec_to_json(model.std.x_mean)},
                         {"x_std", vec_to_json(model.std.x_std)},
                         {"y_mean", model.std.y_mean},
                         {"y_std", model.std.y_std},
                         {"standardize_y", model.std.standardize_y}};
    j["k"] = model.K;
    j["z"] = mat_to_json(model.Z);
    j["vs"] = {{"m", vec_to_json(model.vs.m)}, {"raw_s", vec_to_json(model.vs.raw_s)}};
    if (model.vs.has_fullrank()) j["vs"]["fullrank_raw"] = mat_to_json(*model.vs.fullrank_raw);
    j["x_train"] = mat_to_json(model.X_train);
    j["y_train"] = vec_to_json(model.y_train);
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write model file " + path);
    out << j.dump(2) << "\n";
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open model file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IngestionError("model file parse failure: " + std::string(e.what()));
    }
    try {
        if (j.at("format").get<std::string>() != "vnngp-model")
            throw IngestionError("not a model file: " + path);
        if (j.at("version").get<int>() != 1)
            throw IngestionError("unsupported model schema version");
        Model model;
        model.method = method_from_string(j.at("method").get<std::string>());
        const auto& jk = j.at("kernel");
        model.kernel.kind = kernel_kind_from_string(jk.at("kind").get<std::string>());
        model.kernel.raw_lengthscales = vec_from_json(jk.at("raw_lengthscales"));
        model.kernel.raw_outputscale = jk.at("raw_outputscale").get<double>();
        const auto& jl = j.at("likelihood");
        model.lik.kind = likelihood_kind_from_string(jl.at("kind").get<std::string>());
        model.lik.raw_noise = jl.at("raw_noise").get<double>();
        model.lik.raw_scale = jl.at("raw_scale").get<double>();
        model.lik.dof = jl.at("dof").get<double>();
        model.lik.quad_order = jl.at("quad_order").get<int>();
        const auto& js = j.at("standardizer");
        model.std.x_mean = vec_from_json(js.at("x_mean"));
        model.std.x_std = vec_from_json(js.at("x_std"));
        model.std.y_mean = js.at("y_mean").get<double>();
        model.std.y_std = js.at("y_std").get<double>();
        model.std.standardize_y = js.at("standardize_y").get<bool>();
        model.K = j.at("k").get<int>();
        model.Z = mat_from_json(j.at("z"));
        model.vs.m = vec_from_json(j.at("vs").at("m"));
        model.vs.raw_s = vec_from_json(j.at("vs").at("raw_s"));
        if (j.at("vs").contains("fullrank_raw"))
            model.vs.fullrank_raw = mat_from_json(j.at("vs").at("fullrank_raw"));
        model.X_train = mat_from_json(j.at("x_train"));
        model.y_train = vec_from_json(j.at("y_train"));
        return model;
    } catch (const json::exception& e) {
        throw IngestionError("model file missing fields: " + std::string(e.what()));
    }
}

} // namespace vnngp
