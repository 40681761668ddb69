#include "vnngp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vnngp/errors.hpp"
#include "vnngp/rng.hpp"
#include "vnngp/smallmat.hpp"

namespace vnngp {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_number(const std::string& field, int row, int col) {
    const std::string t = trim(field);
    if (t.empty())
        throw IngestionError("empty field at row " + std::to_string(row) + ", column " +
                             std::to_string(col));
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size())
        throw IngestionError("unparseable number '" + t + "' at row " + std::to_string(row) +
                             ", column " + std::to_string(col));
    return v;
}

} // namespace

LoadReport load_csv(const std::string& path, const std::string& target, bool bernoulli_labels) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open " + path);

    std::string line;
    std::vector<std::string> header;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        for (auto& h : split_fields(t)) header.push_back(trim(h));
        break;
    }
    if (header.empty()) throw IngestionError("no header row in " + path);

    int target_col = static_cast<int>(header.size()) - 1;
    if (!target.empty()) {
        const auto it = std::find(header.begin(), header.end(), target);
        if (it == header.end())
            throw IngestionError("target column not found: " + target);
        target_col = static_cast<int>(it - header.begin());
    }

    std::vector<std::vector<double>> rows;
    int dropped = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto fields = split_fields(t);
        if (fields.size() != header.size())
            throw IngestionError("row " + std::to_string(lineno) + " has " +
                                 std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(header.size()));
        std::vector<double> vals(fields.size());
        bool finite = true;
        for (size_t c = 0; c < fields.size(); ++c) {
            vals[c] = parse_number(fields[c], lineno, static_cast<int>(c));
            finite = finite && std::isfinite(vals[c]);
        }
        if (!finite) {
            ++dropped;
            continue;
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw IngestionError("no data rows in " + path);

    LoadReport rep;
    rep.rows_dropped = dropped;
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(header.size()) - 1;
    rep.data.X.resize(n, d);
    rep.data.y.resize(n);
    rep.data.feature_names.reserve(d);
    for (size_t c = 0; c < header.size(); ++c)
        if (static_cast<int>(c) != target_col) rep.data.feature_names.push_back(header[c]);
    for (int i = 0; i < n; ++i) {
        int at = 0;
        for (size_t c = 0; c < header.size(); ++c) {
            if (static_cast<int>(c) == target_col)
                rep.data.y[i] = rows[i][c];
            else
                rep.data.X(i, at++) = rows[i][c];
        }
    }
    if (bernoulli_labels) {
        for (int i = 0; i < n; ++i) {
            if (rep.data.y[i] == 0.0) rep.data.y[i] = -1.0;
            if (rep.data.y[i] != 1.0 && rep.data.y[i] != -1.0)
                throw IngestionError("classification labels must be in {0,1} or {-1,+1}; row " +
                                     std::to_string(i) + " has " + std::to_string(rep.data.y[i]));
        }
    }
    return rep;
}

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<int>& perm, int from, int count) {
    Dataset out;
    out.X.resize(count, ds.X.cols());
    out.y.resize(count);
    out.feature_names = ds.feature_names;
    for (int i = 0; i < count; ++i) {
        out.X.row(i) = ds.X.row(perm[from + i]);
        out.y[i] = ds.y[perm[from + i]];
    }
    return out;
}

} // namespace

SplitResult split(const Dataset& ds, double frac_train, double frac_val, double frac_test,
                  std::uint64_t seed) {
    const int n = ds.n();
    if (n < 3) throw ArgumentError("split needs at least 3 rows");
    const double fracs[3] = {frac_train, frac_val, frac_test};
    double sum = 0.0;
    for (double f : fracs) {
        if (f < 0.0) throw ArgumentError("split fractions must be nonnegative");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("split fractions must sum to 1");

    // largest-remainder apportionment; remainder ties resolved in
    // train, val, test order
    int counts[3];
    double rema[3];
    int assigned = 0;
    for (int k = 0; k < 3; ++k) {
        const double quota = n * fracs[k];
        counts[k] = static_cast<int>(std::floor(quota));
        rema[k] = quota - counts[k];
        assigned += counts[k];
    }
    int left = n - assigned;
    std::vector<int> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rema[a] > rema[b]; });
    for (int k = 0; k < 3 && left > 0; ++k, --left) counts[order[k]] += 1;

    Rng rng(seed);
    const auto perm = rng.permutation(n);
    SplitResult out;
    out.train = take_rows(ds, perm, 0, counts[0]);
    out.val = take_rows(ds, perm, counts[0], counts[1]);
    out.test = take_rows(ds, perm, counts[0] + counts[1], counts[2]);
    return out;
}

Standardizer Standardizer::fit(const Dataset& train, bool standardize_y) {
    if (train.n() == 0) throw ArgumentError("cannot fit standardizer on empty data");
    Standardizer st;
    st.standardize_y = standardize_y;
    const int d = train.d();
    st.x_mean.resize(d);
    st.x_std.resize(d);
    for (int c = 0; c < d; ++c) {
        st.x_mean[c] = train.X.col(c).mean();
        const double var = (train.X.col(c).array() - st.x_mean[c]).square().mean();
        const double sd = std::sqrt(var);
        st.x_std[c] = sd > 1e-12 ? sd : 1.0; // constant column: center only
    }
    if (standardize_y) {
        st.y_mean = train.y.mean();
        const double var = (train.y.array() - st.y_mean).square().mean();
        const double sd = std::sqrt(var);
        st.y_std = sd > 1e-12 ? sd : 1.0;
    }
    return st;
}

Mat Standardizer::transform_x(const Mat& X) const {
    if (X.cols() != x_mean.size()) throw ArgumentError("standardizer dimension mismatch");
    Mat out = X;
    for (int c = 0; c < X.cols(); ++c)
        out.col(c) = (X.col(c).array() - x_mean[c]) / x_std[c];
    return out;
}

Vec Standardizer::transform_y(const Vec& y) const {
    if (!standardize_y) return y;
    return (y.array() - y_mean) / y_std;
}

Vec sample_gp(const KernelParams& kp, const Mat& X, double noise, std::uint64_t seed) {
    if (noise < 0.0 || !std::isfinite(noise)) throw ArgumentError("noise must be nonnegative");
    const int n = static_cast<int>(X.rows());
    Rng rng(derive_seed(seed, 0));
    const double os = kp.outputscale();
    Vec y;
    if (os == 0.0) {
        y = Vec::Zero(n);
    } else {
        Mat K = kernel_cross(kp, X, X);
        K.diagonal().array() += 1e-10 * os; // nugget for dense grids
        const CholFactor F = chol_jittered(K, os);
        y = F.L * rng.normal_vec(n);
    }
    if (noise > 0.0) y += std::sqrt(noise) * rng.normal_vec(n);
    return y;
}

} // namespace vnngp
