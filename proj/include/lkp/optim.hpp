#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lkp {

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double l2 = 0.0;  // lambda * param is added to the gradient before the moment update
};

/// Moments for a dense parameter block.
struct AdamState {
    explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;
    std::uint64_t skipped = 0;
};

/// One bias-corrected Adam update of `params` at (1-based) step `t`, using the
/// caller's moment slices. Assumes finite gradients.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::uint64_t t, const AdamHyper& hyper);

/// Dense step. A non-finite gradient leaves params and moments untouched,
/// bumps state.skipped and returns false.
bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& hyper);

} // namespace lkp
