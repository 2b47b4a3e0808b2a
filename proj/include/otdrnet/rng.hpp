#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace otdrnet {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic random stream. Uniform and normal draws are generated from
// raw engine words (not std:: distributions) so sequences are identical
// across standard library implementations. Child streams are derived by
// child_seed = root_seed XOR splitmix64(counter).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    Rng child(std::uint64_t counter) const {
        return Rng(seed_ ^ splitmix64(counter));
    }

    std::uint64_t seed() const { return seed_; }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // inclusive on both ends
    int uniform_int(int lo, int hi) {
        int n = hi - lo + 1;
        int k = static_cast<int>(uniform() * n);
        if (k >= n) k = n - 1;
        return lo + k;
    }

    // standard normal, Box-Muller with cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace otdrnet
