#pragma once

#include <cstdint>
#include <vector>

#include "vnngp/mathutil.hpp"

namespace vnngp {

enum class OrderingScheme { Random, Coordinate };

// Permutation of inducing points: perm[p] = original row index placed at
// ordered position p. Random ordering is fully determined by the seed.
struct Ordering {
    std::vector<int> perm;
    OrderingScheme scheme = OrderingScheme::Random;
    std::uint64_t seed = 0;
    int coord_dim = 0;

    static Ordering random(int m, std::uint64_t seed);
    // Sorts by the given coordinate, ties by original index.
    static Ordering coordinate(const Mat& Z, int dim);
    static Ordering identity(int m);

    int size() const { return static_cast<int>(perm.size()); }
};

// Rows of Z rearranged into ordering positions.
Mat apply_ordering(const Mat& Z, const Ordering& ord);

// Neighbor sets in ORDERED positions. inducing_nn[j] holds the min(K, j)
// nearest predecessors of position j (paper's n(j), with n(0) empty);
// data_nn[i] holds the min(K, M) nearest inducing positions to data point i.
// All sets are sorted ascending for deterministic matrix assembly.
struct NeighborIndex {
    int K = 0;
    std::vector<std::vector<int>> inducing_nn;
    std::vector<std::vector<int>> data_nn;

    int m() const { return static_cast<int>(inducing_nn.size()); }
    int n() const { return static_cast<int>(data_nn.size()); }
};

// Exact top-K by squared Euclidean distance, ties by smaller index; result
// ranked nearest-first. This is the oracle the builders are tested against.
std::vector<int> brute_force_knn(const Vec& query, const Mat& candidates, int K);

// Zord must already be in ordered positions (see apply_ordering).
NeighborIndex build_inducing_nn(const Mat& Zord, int K);
NeighborIndex build_inducing_nn(const Mat& Z, const Ordering& ord, int K);

// Fills idx.data_nn with neighbor sets of X against Zord.
void build_data_nn(NeighborIndex& idx, const Mat& X, const Mat& Zord);
std::vector<int> data_nn_for_point(const Mat& Zord, const Vec& x, int K);

} // namespace vnngp
