#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cgar/model.hpp"

namespace cgar {

// Linear warmup from zero over `warmup` steps, then cosine decay that
// reaches exactly zero at `total`. Step 0 maps to zero, step `warmup` to
// the peak.
double lr_at(long step, long total, long warmup, double peak);

// Scales every gradient in place so the global L2 norm does not exceed
// max_norm. Returns the pre-clip norm.
double clip_gradients(GradMap& grads, double max_norm);

// Moments are keyed by parameter name so checkpoints survive pointer
// identity changes.
struct OptimizerState {
    struct Moments {
        std::vector<real> m;
        std::vector<real> v;
    };
    long step = 0;
    std::map<std::string, Moments> slots;
};

// One decoupled-weight-decay Adam step. Parameters without a gradient
// entry are treated as zero-gradient (their moments still decay and weight
// decay still applies).
void adamw_step(ParamList& params, const GradMap& grads, OptimizerState& state,
                double lr, double weight_decay, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

}  // namespace cgar
