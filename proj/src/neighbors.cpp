#include "vnngp/neighbors.hpp"

#include <algorithm>
#include <numeric>

#include "vnngp/errors.hpp"
#include "vnngp/rng.hpp"

namespace vnngp {

Ordering Ordering::random(int m, std::uint64_t seed) {
    if (m < 0) throw ArgumentError("ordering size must be nonnegative");
    Ordering ord;
    ord.scheme = OrderingScheme::Random;
    ord.seed = seed;
    Rng rng(seed);
    ord.perm = rng.permutation(m);
    return ord;
}

Ordering Ordering::coordinate(const Mat& Z, int dim) {
    if (dim < 0 || dim >= Z.cols())
        throw ArgumentError("ordering coordinate out of range");
    Ordering ord;
    ord.scheme = OrderingScheme::Coordinate;
    ord.coord_dim = dim;
    ord.perm.resize(Z.rows());
    std::iota(ord.perm.begin(), ord.perm.end(), 0);
    std::stable_sort(ord.perm.begin(), ord.perm.end(),
                     [&](int a, int b) { return Z(a, dim) < Z(b, dim); });
    return ord;
}

Ordering Ordering::identity(int m) {
    if (m < 0) throw ArgumentError("ordering size must be nonnegative");
    Ordering ord;
    ord.scheme = OrderingScheme::Coordinate;
    ord.perm.resize(m);
    std::iota(ord.perm.begin(), ord.perm.end(), 0);
    return ord;
}

Mat apply_ordering(const Mat& Z, const Ordering& ord) {
    if (ord.size() != Z.rows())
        throw ArgumentError("ordering size does not match row count");
    Mat out(Z.rows(), Z.cols());
    for (int p = 0; p < ord.size(); ++p) out.row(p) = Z.row(ord.perm[p]);
    return out;
}

std::vector<int> brute_force_knn(const Vec& query, const Mat& candidates, int K) {
    if (K < 0) throw ArgumentError("K must be nonnegative");
    const int n = static_cast<int>(candidates.rows());
    const int take = std::min(K, n);
    if (take == 0) return {};
    if (candidates.cols() != query.size())
        throw ArgumentError("query dimension does not match candidates");
    std::vector<std::pair<double, int>> ranked(n);
    for (int i = 0; i < n; ++i)
        ranked[i] = {(candidates.row(i).transpose() - query).squaredNorm(), i};
    std::partial_sort(ranked.begin(), ranked.begin() + take, ranked.end());
    std::vector<int> out(take);
    for (int i = 0; i < take; ++i) out[i] = ranked[i].second;
    return out;
}

NeighborIndex build_inducing_nn(const Mat& Zord, int K) {
    if (K < 0) throw ArgumentError("K must be nonnegative");
    const int m = static_cast<int>(Zord.rows());
    NeighborIndex idx;
    idx.K = K;
    idx.inducing_nn.resize(m);
    for (int j = 0; j < m; ++j) {
        auto nbrs = brute_force_knn(Zord.row(j).transpose(), Zord.topRows(j), K);
        std::sort(nbrs.begin(), nbrs.end());
        idx.inducing_nn[j] = std::move(nbrs);
    }
    return idx;
}

NeighborIndex build_inducing_nn(const Mat& Z, const Ordering& ord, int K) {
    return build_inducing_nn(apply_ordering(Z, ord), K);
}

void build_data_nn(NeighborIndex& idx, const Mat& X, const Mat& Zord) {
    if (Zord.rows() != idx.m())
        throw ArgumentError("inducing index size does not match Zord");
    if (X.rows() > 0 && X.cols() != Zord.cols())
        throw ArgumentError("data dimension does not match inducing points");
    idx.data_nn.resize(X.rows());
    for (int i = 0; i < X.rows(); ++i)
        idx.data_nn[i] = data_nn_for_point(Zord, X.row(i).transpose(), idx.K);
}

std::vector<int> data_nn_for_point(const Mat& Zord, const Vec& x, int K) {
    auto nbrs = brute_force_knn(x, Zord, K);
    std::sort(nbrs.begin(), nbrs.end());
    return nbrs;
}

} // namespace vnngp
