#include "lkp/optim.hpp"

#include <cmath>

#include "lkp/error.hpp"

namespace lkp {

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::uint64_t t, const AdamHyper& h) {
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i] + h.l2 * params[i];
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.eps);
    }
}

bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& hyper) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ContractViolation("adam_step: parameter, gradient and moment shapes must match");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) {
            ++state.skipped;
            return false;
        }
    }
    ++state.step;
    adam_update(params, grads, state.m, state.v, state.step, hyper);
    return true;
}

} // namespace lkp
