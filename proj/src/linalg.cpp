#include "lkp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lkp/error.hpp"

namespace lkp {

namespace {

void check_order(std::size_t order) {
    if (order < 1 || order > kMaxOrder) {
        throw ContractViolation("SymMatrix order must be in [1, 16], got " + std::to_string(order));
    }
}

constexpr double kJacobiTolerance = 1e-10;
constexpr int kJacobiMaxSweeps = 100;
constexpr double kEspRescaleThreshold = 1e8;

} // namespace

SymMatrix::SymMatrix(std::size_t order) : order_(order) {
    check_order(order);
    std::fill_n(a_.begin(), order * order, 0.0);
}

SymMatrix SymMatrix::from_rows(std::size_t order, std::span<const double> entries) {
    SymMatrix m(order);
    if (entries.size() != order * order) {
        throw ContractViolation("SymMatrix::from_rows: expected " + std::to_string(order * order) +
                                " entries, got " + std::to_string(entries.size()));
    }
    for (std::size_t i = 0; i < order; ++i) {
        for (std::size_t j = 0; j < order; ++j) {
            if (entries[i * order + j] != entries[j * order + i]) {
                std::ostringstream os;
                os << "SymMatrix::from_rows: entries (" << i << ',' << j << ") and (" << j << ','
                   << i << ") differ";
                throw ContractViolation(os.str());
            }
            m.a_[i * order + j] = entries[i * order + j];
        }
    }
    return m;
}

SymMatrix SymMatrix::identity(std::size_t order) {
    SymMatrix m(order);
    for (std::size_t i = 0; i < order; ++i) m.a_[i * order + i] = 1.0;
    return m;
}

SymMatrix SymMatrix::diagonal(std::span<const double> diag) {
    SymMatrix m(diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m.a_[i * diag.size() + i] = diag[i];
    return m;
}

double SymMatrix::trace() const noexcept {
    double t = 0.0;
    for (std::size_t i = 0; i < order_; ++i) t += a_[i * order_ + i];
    return t;
}

double SymMatrix::frobenius_norm() const noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < order_ * order_; ++i) s += a_[i] * a_[i];
    return std::sqrt(s);
}

SymMatrix SymMatrix::permuted(std::span<const std::size_t> perm) const {
    if (perm.size() != order_) throw ContractViolation("SymMatrix::permuted: size mismatch");
    SymMatrix p(order_);
    for (std::size_t i = 0; i < order_; ++i)
        for (std::size_t j = 0; j < order_; ++j) p.a_[i * order_ + j] = (*this)(perm[i], perm[j]);
    return p;
}

SymMatrix SymMatrix::principal(std::span<const std::size_t> idx) const {
    SymMatrix p(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= order_) throw ContractViolation("SymMatrix::principal: index out of range");
        for (std::size_t j = 0; j < idx.size(); ++j) p.a_[i * idx.size() + j] = (*this)(idx[i], idx[j]);
    }
    return p;
}

std::vector<double> eigenvalues_sym(const SymMatrix& m) {
    const std::size_t n = m.order();
    std::array<double, kMaxOrder * kMaxOrder> a;
    std::copy(m.data().begin(), m.data().end(), a.begin());
    auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };

    const double tol = kJacobiTolerance * m.frobenius_norm();
    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += at(i, j) * at(i, j);
        return std::sqrt(s);
    };

    double off = off_norm();
    if (!std::isfinite(off) || !std::isfinite(tol)) {
        throw ConvergenceError("eigenvalues_sym: matrix has non-finite entries", off);
    }
    int sweep = 0;
    while (off > tol) {
        if (sweep++ >= kJacobiMaxSweeps) {
            std::ostringstream os;
            os << "eigenvalues_sym: no convergence after " << kJacobiMaxSweeps
               << " sweeps, off-diagonal residual " << off;
            throw ConvergenceError(os.str(), off);
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (apq == 0.0) continue;
                // Symmetric Schur 2x2: choose the smaller rotation angle.
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t r = 0; r < n; ++r) {
                    const double arp = at(r, p);
                    const double arq = at(r, q);
                    at(r, p) = c * arp - s * arq;
                    at(r, q) = s * arp + c * arq;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double apr = at(p, r);
                    const double aqr = at(q, r);
                    at(p, r) = c * apr - s * aqr;
                    at(q, r) = s * apr + c * aqr;
                }
                at(p, q) = 0.0;
                at(q, p) = 0.0;
            }
        }
        off = off_norm();
    }

    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = at(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

SmallLu::SmallLu(std::span<const double> rows, std::size_t order) : n_(order) {
    if (order > kMaxOrder || rows.size() < order * order) {
        throw ContractViolation("SmallLu: bad order or buffer size");
    }
    std::copy(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(order * order), lu_.begin());
    for (std::size_t i = 0; i < n_; ++i) piv_[i] = i;

    for (std::size_t col = 0; col < n_; ++col) {
        std::size_t best = col;
        double best_abs = std::abs(lu_[col * n_ + col]);
        for (std::size_t r = col + 1; r < n_; ++r) {
            const double v = std::abs(lu_[r * n_ + col]);
            if (v > best_abs) {
                best_abs = v;
                best = r;
            }
        }
        if (best_abs == 0.0) {
            singular_ = true;
            sign_ = 0;
            log_abs_det_ = -std::numeric_limits<double>::infinity();
            return;
        }
        if (best != col) {
            for (std::size_t c = 0; c < n_; ++c) std::swap(lu_[col * n_ + c], lu_[best * n_ + c]);
            std::swap(piv_[col], piv_[best]);
            sign_ = -sign_;
        }
        const double pivot = lu_[col * n_ + col];
        if (pivot < 0) sign_ = -sign_;
        log_abs_det_ += std::log(std::abs(pivot));
        for (std::size_t r = col + 1; r < n_; ++r) {
            const double f = lu_[r * n_ + col] / pivot;
            lu_[r * n_ + col] = f;
            if (f == 0.0) continue;
            for (std::size_t c = col + 1; c < n_; ++c) lu_[r * n_ + c] -= f * lu_[col * n_ + c];
        }
    }
}

double SmallLu::det() const noexcept {
    if (singular_) return 0.0;
    return sign_ * std::exp(log_abs_det_);
}

void SmallLu::inverse(std::span<double> out) const {
    // Solve LU x = P e_j column by column.
    std::array<double, kMaxOrder> x;
    for (std::size_t j = 0; j < n_; ++j) {
        for (std::size_t i = 0; i < n_; ++i) x[i] = (piv_[i] == j) ? 1.0 : 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            double s = x[i];
            for (std::size_t c = 0; c < i; ++c) s -= lu_[i * n_ + c] * x[c];
            x[i] = s;
        }
        for (std::size_t ii = n_; ii-- > 0;) {
            double s = x[ii];
            for (std::size_t c = ii + 1; c < n_; ++c) s -= lu_[ii * n_ + c] * x[c];
            x[ii] = s / lu_[ii * n_ + ii];
        }
        for (std::size_t i = 0; i < n_; ++i) out[i * n_ + j] = x[i];
    }
}

double det_principal_submatrix(const SymMatrix& m, std::span<const std::size_t> idx) {
    if (idx.empty()) return 1.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= m.order() || (i > 0 && idx[i] <= idx[i - 1])) {
            throw ContractViolation("det_principal_submatrix: index list must be strictly increasing and in range");
        }
    }
    std::array<double, kMaxOrder * kMaxOrder> sub;
    const std::size_t s = idx.size();
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j) sub[i * s + j] = m(idx[i], idx[j]);
    return SmallLu({sub.data(), s * s}, s).det();
}

EspTable::EspTable(std::size_t k, std::span<const double> lambdas)
    : k_(k), m_(lambdas.size()), e_((k + 1) * (lambdas.size() + 1), 0.0) {
    if (k > m_) {
        throw ContractViolation("esp: k = " + std::to_string(k) + " exceeds the number of eigenvalues " +
                                std::to_string(m_));
    }
    const std::size_t w = m_ + 1;
    for (std::size_t m = 0; m <= m_; ++m) e_[m] = 1.0;
    for (std::size_t l = 1; l <= k_; ++l) {
        e_[l * w] = 0.0;
        for (std::size_t m = 1; m <= m_; ++m) {
            e_[l * w + m] = e_[l * w + m - 1] + lambdas[m - 1] * e_[(l - 1) * w + m - 1];
        }
    }
}

double esp(std::size_t k, std::span<const double> lambdas) { return EspTable(k, lambdas).value(); }

double log_esp(std::size_t k, std::span<const double> lambdas) {
    if (k > lambdas.size()) {
        throw ContractViolation("log_esp: k exceeds the number of eigenvalues");
    }
    double lmax = 0.0;
    for (double l : lambdas) lmax = std::max(lmax, l);
    double value = 0.0;
    double shift = 0.0;
    if (lmax > kEspRescaleThreshold) {
        std::vector<double> scaled(lambdas.begin(), lambdas.end());
        for (double& l : scaled) l /= lmax;
        value = esp(k, scaled);
        shift = static_cast<double>(k) * std::log(lmax);
    } else {
        value = esp(k, lambdas);
    }
    if (!(value > 0.0)) return -std::numeric_limits<double>::infinity();
    return std::log(value) + shift;
}

} // namespace lkp
