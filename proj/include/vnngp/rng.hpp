#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "vnngp/mathutil.hpp"

namespace vnngp {

// splitmix64 step; used to derive decorrelated stream seeds from a user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + stream * 0x9e3779b97f4a7c15ULL + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// mt19937_64 with hand-rolled samplers. The standard specifies the engine's
// output bit-for-bit but not the distributions, so sampling is done here to
// keep results identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; consumes exactly two engine draws
    // per pair, second value cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
        double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Unbiased integer in [0, n) by rejection.
    int uniform_int(int n) {
        auto un = static_cast<std::uint64_t>(n);
        std::uint64_t rem = (0ULL - un) % un; // 2^64 mod n
        std::uint64_t u = eng_();
        if (rem != 0) {
            while (u >= 0ULL - rem) u = eng_();
        }
        return static_cast<int>(u % un);
    }

    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        for (int i = n - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(p[i], p[j]);
        }
        return p;
    }

    Vec normal_vec(int n) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace vnngp
