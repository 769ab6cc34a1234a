#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace freqlens {

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Uniform double in (0, 1]; 53 mantissa bits.
inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

// Standard normal draws via Box-Muller. std::normal_distribution is
// implementation-defined, so checkpoints would not reproduce across standard
// libraries; this sampler does.
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_unit(rng_);
        const double u2 = uniform_unit(rng_);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 rng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Fisher-Yates with explicit index draws (std::shuffle is also
// implementation-defined).
template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace freqlens
