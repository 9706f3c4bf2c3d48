#pragma once

#include "cgar/common.hpp"

namespace cgar {

// One deep-recursion setting: n latent refinements per answer update, T
// answer-update cycles (the first T-1 run without gradient recording).
struct DepthConfig {
    int n = 6;
    int T = 3;
    bool operator==(const DepthConfig&) const = default;
};

// Number of transformer layers traversed by one full deep recursion:
// T * (n + 1) block applications, each n_layers layers deep.
int effective_depth(const DepthConfig& d, int n_layers = 2);

inline void validate_depth(const DepthConfig& d) {
    if (d.n < 1 || d.T < 1)
        throw ValidationError("depth config: n and T must both be at least 1");
}

}  // namespace cgar
