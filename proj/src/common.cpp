#include "cgar/common.hpp"

#include <cmath>

namespace cgar {

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t state) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        state ^= p[i];
        state *= 1099511628211ULL;
    }
    return state;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double rand_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double rand_normal(std::mt19937_64& rng) {
    // u1 in (0, 1] so the log is finite.
    double u1 = static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
    double u2 = rand_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double rand_trunc_normal(std::mt19937_64& rng, double sigma, double clip) {
    for (;;) {
        double x = rand_normal(rng) * sigma;
        if (std::abs(x) <= clip * sigma) return x;
    }
}

int rand_index(std::mt19937_64& rng, int n) {
    if (n <= 0) throw ValidationError("rand_index: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    for (;;) {
        std::uint64_t x = rng();
        if (x < limit) return static_cast<int>(x % un);
    }
}

}  // namespace cgar
