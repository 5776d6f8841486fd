#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lkp {

/// Caller broke a documented precondition (bad sizes, k > m, n != k for NPS, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Subset enumeration was asked for a ground set larger than the guard allows.
class EnumerationTooLarge : public ContractViolation {
public:
    using ContractViolation::ContractViolation;
};

/// An item or user id could not be resolved.
class LookupError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Input files that do not parse, or data that violates a dataset invariant.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Jacobi sweeps ran out before the off-diagonal mass fell under tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// A training objective evaluated to inf/nan.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingDiverged : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace lkp
