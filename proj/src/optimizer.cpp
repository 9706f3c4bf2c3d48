#include "cgar/optimizer.hpp"

#include <cmath>

namespace cgar {

double lr_at(long step, long total, long warmup, double peak) {
    if (step < 0) throw ValidationError("lr_at: step must be nonnegative");
    if (total < 1 || warmup < 0 || warmup >= total)
        throw ValidationError("lr_at: need 0 <= warmup < total");
    if (!(peak > 0)) throw ValidationError("lr_at: peak must be positive");
    if (warmup > 0 && step <= warmup)
        return peak * static_cast<double>(step) / static_cast<double>(warmup);
    if (step >= total) return 0.0;
    const double progress =
        static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
    return peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double clip_gradients(GradMap& grads, double max_norm) {
    if (!(max_norm > 0)) throw ValidationError("clip_gradients: max_norm must be positive");
    double sq = 0;
    for (const auto& [id, g] : grads.entries())
        for (real v : g.values()) sq += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const real s = static_cast<real>(max_norm / norm);
        for (auto& [id, g] : grads.entries())
            for (real& v : g.values()) v *= s;
    }
    return norm;
}

void adamw_step(ParamList& params, const GradMap& grads, OptimizerState& state,
                double lr, double weight_decay, double beta1, double beta2,
                double eps) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (auto& [name, param] : params) {
        auto& slot = state.slots[name];
        if (slot.m.empty()) {
            slot.m.assign(param.size(), real(0));
            slot.v.assign(param.size(), real(0));
        } else if (static_cast<long>(slot.m.size()) != param.size()) {
            throw ValidationError("adamw_step: moment shape mismatch for '" + name + "'");
        }
        const Tensor* g = grads.find(param);
        auto pv = param.values();
        for (long i = 0; i < param.size(); ++i) {
            const double gi = g ? static_cast<double>(g->values()[i]) : 0.0;
            const double m = beta1 * slot.m[i] + (1.0 - beta1) * gi;
            const double v = beta2 * slot.v[i] + (1.0 - beta2) * gi * gi;
            slot.m[i] = static_cast<real>(m);
            slot.v[i] = static_cast<real>(v);
            const double update =
                (m / bc1) / (std::sqrt(v / bc2) + eps) + weight_decay * pv[i];
            pv[i] -= static_cast<real>(lr * update);
        }
    }
}

}  // namespace cgar
