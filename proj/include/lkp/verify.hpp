#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace lkp {

struct CheckResult {
    std::string name;
    std::size_t cases = 0;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    double seconds = 0.0;
};

struct VerifyReport {
    std::vector<CheckResult> checks;

    bool passed() const noexcept;
    nlohmann::json to_json() const;
};

/// Self-check suite: normalizer against subset enumeration, probability
/// normalization, analytic gradients against central differences, and the
/// quality/diversity log-det split.
VerifyReport run_verify(std::uint64_t seed = 0);

/// max_i |analytic_i - numeric_i| / max(max_i |numeric_i|, 1e-8)
double gradient_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

} // namespace lkp
