#pragma once

#include <span>
#include <vector>

#include "cgar/ops.hpp"

namespace cgar {

// Normalized exponential weights for deep supervision: step t of n gets
// lambda^(t-1) / Z with Z = sum_t lambda^(t-1). Earlier steps dominate for
// lambda < 1; lambda = 1 recovers uniform weighting 1/n.
struct SupervisionWeights {
    double lambda = 1.0;
    int n_sup = 1;
    double z = 1.0;               // normalizer
    std::vector<double> w;        // w[t-1], sums to 1
};

// Requires 0 < lambda <= 1 and n_sup >= 1. The normalizer uses the closed
// form (1 - lambda^n) / (1 - lambda) away from lambda = 1.
SupervisionWeights compute_weights(double lambda, int n_sup);

// Loss contribution of one supervision step: weighted token cross-entropy
// plus a halting term that trains q toward the whole-sequence exact-match
// indicator. The halting term is scaled by beta outside the normalizer;
// bce_inside_normalizer additionally divides it by Z for the variant where
// the entire step loss shares one normalization.
struct StepLoss {
    Tensor total;         // scalar, live on the active tape
    double ce = 0;        // unweighted token-summed cross-entropy
    double weighted_ce = 0;
    double bce = 0;       // unweighted mean binary cross-entropy
    bool exact_match = false;
};

StepLoss cgar_step_loss(const Tensor& logits, std::span<const int> targets,
                        const Tensor& q, const SupervisionWeights& w, int step,
                        double beta, bool bce_inside_normalizer = false);

// Fits the decay rate alpha of ||grad_t|| ~ C * exp(-alpha * t) from
// per-step gradient norms by least squares on -log(norm_t / norm_1)
// against the step index. Needs at least 3 positive norms.
double gradient_decay_profile(std::span<const double> norms);

// Unbiased sample variance. Needs at least 2 samples.
double gradient_variance(std::span<const double> samples);

}  // namespace cgar
