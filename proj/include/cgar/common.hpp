#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cgar {

// Scalar type for tensor values. Tests and published tolerances assume the
// 64-bit build; the 32-bit build exists for training throughput experiments.
#ifdef CGAR_REAL32
using real = float;
#else
using real = double;
#endif

// Invalid configs, schedules, datasets or arguments. CLI exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure: divergence (NaN/inf state) or a failed gradient check.
// CLI exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Missing/corrupt files, unwritable paths, format or version mismatches.
// CLI exit code 4.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a over a byte range. Used for checkpoint checksums and config hashes.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t state = 14695981039346656037ULL);
std::uint64_t fnv1a64(const std::string& s);

// Derives an independent stream seed from a base seed and a salt so that
// per-item generators never overlap (splitmix64-style mixing).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt);

// Uniform in [0, 1) with 53-bit resolution.
double rand_uniform(std::mt19937_64& rng);

// Standard normal via Box-Muller. No cached spare: one value per call keeps
// the stream position independent of call history.
double rand_normal(std::mt19937_64& rng);

// Normal(0, sigma^2) resampled until |x| <= clip * sigma.
double rand_trunc_normal(std::mt19937_64& rng, double sigma, double clip = 2.0);

// Unbiased integer in [0, n) via rejection sampling.
int rand_index(std::mt19937_64& rng, int n);

}  // namespace cgar
