#include "cgar/supervision.hpp"

#include <cmath>

namespace cgar {

SupervisionWeights compute_weights(double lambda, int n_sup) {
    if (!(lambda > 0.0 && lambda <= 1.0))
        throw ValidationError("supervision: lambda must lie in (0, 1]");
    if (n_sup < 1) throw ValidationError("supervision: n_sup must be at least 1");
    SupervisionWeights out;
    out.lambda = lambda;
    out.n_sup = n_sup;
    out.z = lambda == 1.0
                ? static_cast<double>(n_sup)
                : (1.0 - std::pow(lambda, n_sup)) / (1.0 - lambda);
    out.w.resize(n_sup);
    for (int t = 1; t <= n_sup; ++t) out.w[t - 1] = std::pow(lambda, t - 1) / out.z;
    return out;
}

StepLoss cgar_step_loss(const Tensor& logits, std::span<const int> targets,
                        const Tensor& q, const SupervisionWeights& w, int step,
                        double beta, bool bce_inside_normalizer) {
    if (step < 1 || step > w.n_sup)
        throw ValidationError("cgar_step_loss: step index out of range [1, n_sup]");
    if (beta < 0.0) throw ValidationError("cgar_step_loss: beta must be nonnegative");

    StepLoss out;
    out.exact_match = argmax_rows(logits) == std::vector<int>(targets.begin(), targets.end());

    Tensor ce = cross_entropy_sum(logits, targets);
    out.ce = static_cast<double>(ce.item());
    const real wt = static_cast<real>(w.w[step - 1]);
    out.weighted_ce = w.w[step - 1] * out.ce;
    out.total = scale(ce, wt);

    if (beta > 0.0) {
        Tensor bce = bce_mean(q, out.exact_match);
        out.bce = static_cast<double>(bce.item());
        double coeff = bce_inside_normalizer ? beta / w.z : beta;
        out.total = add(out.total, scale(bce, static_cast<real>(coeff)));
    }
    return out;
}

double gradient_decay_profile(std::span<const double> norms) {
    if (norms.size() < 3)
        throw ValidationError("gradient_decay_profile: need at least 3 step norms");
    for (double n : norms)
        if (!(n > 0.0))
            throw ValidationError("gradient_decay_profile: norms must be positive");

    // Model: norm_t = C exp(-alpha t)  =>  -log(norm_t / norm_1) = alpha t + b.
    // Ordinary least squares slope over t = 1..N.
    const int n = static_cast<int>(norms.size());
    double tbar = 0, ubar = 0;
    std::vector<double> u(n);
    for (int t = 1; t <= n; ++t) {
        u[t - 1] = -std::log(norms[t - 1] / norms[0]);
        tbar += t;
        ubar += u[t - 1];
    }
    tbar /= n;
    ubar /= n;
    double num = 0, den = 0;
    for (int t = 1; t <= n; ++t) {
        num += (t - tbar) * (u[t - 1] - ubar);
        den += (t - tbar) * (t - tbar);
    }
    return num / den;
}

double gradient_variance(std::span<const double> samples) {
    if (samples.size() < 2)
        throw ValidationError("gradient_variance: need at least 2 samples");
    double mean = 0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    double acc = 0;
    for (double s : samples) acc += (s - mean) * (s - mean);
    return acc / static_cast<double>(samples.size() - 1);
}

}  // namespace cgar
