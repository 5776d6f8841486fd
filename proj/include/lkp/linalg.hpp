#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace lkp {

inline constexpr std::size_t kMaxOrder = 16;

/// Dense symmetric matrix of order <= 16, stored row-major in a fixed buffer.
/// Symmetry is exact: set() writes both triangles and from_rows() rejects
/// asymmetric input.
class SymMatrix {
public:
    explicit SymMatrix(std::size_t order = 1);

    static SymMatrix from_rows(std::size_t order, std::span<const double> entries);
    static SymMatrix identity(std::size_t order);
    static SymMatrix diagonal(std::span<const double> diag);

    std::size_t order() const noexcept { return order_; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return a_[i * order_ + j]; }
    void set(std::size_t i, std::size_t j, double v) noexcept {
        a_[i * order_ + j] = v;
        a_[j * order_ + i] = v;
    }
    double trace() const noexcept;
    double frobenius_norm() const noexcept;

    /// P M P^T for the permutation mapping new index i to old index perm[i].
    SymMatrix permuted(std::span<const std::size_t> perm) const;
    SymMatrix principal(std::span<const std::size_t> idx) const;

    std::span<const double> data() const noexcept { return {a_.data(), order_ * order_}; }

private:
    std::size_t order_;
    std::array<double, kMaxOrder * kMaxOrder> a_;  // only the leading order*order block is meaningful
};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotation, sorted
/// descending. Throws ConvergenceError (carrying the off-diagonal residual) if
/// 100 sweeps do not bring the off-diagonal Frobenius norm under 1e-10 * ||M||.
std::vector<double> eigenvalues_sym(const SymMatrix& m);

/// LU factorization with partial pivoting of a small dense (not necessarily
/// symmetric) matrix held row-major.
class SmallLu {
public:
    SmallLu(std::span<const double> rows, std::size_t order);

    std::size_t order() const noexcept { return n_; }
    bool singular() const noexcept { return singular_; }
    /// +1, -1, or 0 when an exact zero pivot was hit.
    int sign() const noexcept { return sign_; }
    double log_abs_det() const noexcept { return log_abs_det_; }
    double det() const noexcept;
    /// Writes the inverse row-major into out (size order*order). Undefined when singular().
    void inverse(std::span<double> out) const;

private:
    std::size_t n_;
    std::array<double, kMaxOrder * kMaxOrder> lu_;
    std::array<std::size_t, kMaxOrder> piv_;
    int sign_ = 1;
    double log_abs_det_ = 0.0;
    bool singular_ = false;
};

/// det(M_idx). idx must be strictly increasing; the empty index list gives 1.
double det_principal_submatrix(const SymMatrix& m, std::span<const std::size_t> idx);

/// Dynamic-programming table of elementary symmetric polynomials: cell(l, m) holds
/// e_l(lambda_1..lambda_m) for l <= k and m <= lambdas.size().
class EspTable {
public:
    EspTable(std::size_t k, std::span<const double> lambdas);

    std::size_t k() const noexcept { return k_; }
    std::size_t m() const noexcept { return m_; }
    double cell(std::size_t l, std::size_t m) const noexcept { return e_[l * (m_ + 1) + m]; }
    double value() const noexcept { return cell(k_, m_); }

private:
    std::size_t k_;
    std::size_t m_;
    std::vector<double> e_;
};

/// e_k(lambdas). Throws ContractViolation when k > lambdas.size().
double esp(std::size_t k, std::span<const double> lambdas);

/// log e_k(lambdas), rescaling by the largest eigenvalue when it exceeds 1e8.
/// Returns -inf when e_k <= 0.
double log_esp(std::size_t k, std::span<const double> lambdas);

} // namespace lkp
