#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lkp/diversity.hpp"
#include "lkp/embedding.hpp"
#include "lkp/linalg.hpp"
#include "lkp/types.hpp"

namespace lkp {

/// One training unit: k observed targets followed by n unobserved negatives.
/// Ground-set position p < k is targets[p], otherwise negatives[p - k].
struct GroundSetInstance {
    UserId user = 0;
    std::vector<ItemId> targets;
    std::vector<ItemId> negatives;

    std::size_t k() const noexcept { return targets.size(); }
    std::size_t n() const noexcept { return negatives.size(); }
    std::size_t ground_size() const noexcept { return targets.size() + negatives.size(); }
    ItemId item_at(std::size_t pos) const { return pos < targets.size() ? targets[pos] : negatives[pos - targets.size()]; }
    std::vector<ItemId> ground_items() const;

    friend bool operator==(const GroundSetInstance&, const GroundSetInstance&) = default;
};

/// Throws ContractViolation unless k >= 2, n >= 1, k + n <= 16, lists are
/// duplicate-free and disjoint, and (when requested) n == k.
void validate_instance(const GroundSetInstance& instance, bool require_n_equals_k = false);

inline constexpr double kQualityClamp = 20.0;
inline constexpr double kKernelDiagonalJitter = 1e-6;

/// exp(clamp(<user, item>, -20, 20)).
double predict_quality(std::span<const double> user_vec, std::span<const double> item_vec);

/// L^u restricted to an instance's ground set: L_ij = q_i K_ij q_j + jitter [i == j].
struct PersonalizedKernel {
    SymMatrix matrix;
    SymMatrix diversity;            // K restricted to the ground set
    std::vector<double> qualities;  // q_i = exp(clamped <e_u, e_i>)
    std::vector<double> scores;     // unclamped <e_u, e_i>
    double jitter = 0.0;
    const GroundSetInstance* instance = nullptr;

    std::size_t k() const noexcept { return instance->k(); }
    std::size_t ground_size() const noexcept { return qualities.size(); }
};

PersonalizedKernel build_personalized_kernel(const GroundSetInstance& instance, const EmbeddingTable& embeddings,
                                             const DiversityKernel& kernel,
                                             double jitter = kKernelDiagonalJitter);

/// log Z_k = log e_k(eigenvalues of L).
double log_normalizer(const PersonalizedKernel& kernel);

/// log det(L_subset) - log Z_k. `subset` holds ground-set positions and must have size k.
double kdpp_log_probability(const PersonalizedKernel& kernel, std::span<const std::size_t> subset);
/// Same, reusing a precomputed log Z_k.
double kdpp_log_probability(const PersonalizedKernel& kernel, std::span<const std::size_t> subset,
                            double log_z);

inline constexpr std::size_t kEnumerationGuard = 20;

/// All C(ground_size, k) strictly increasing index lists in lexicographic
/// order. Throws EnumerationTooLarge when ground_size > 20.
std::vector<std::vector<std::size_t>> enumerate_k_subsets(std::size_t ground_size, std::size_t k);

/// Flat, cached lexicographic k-subset table for the hot paths.
class SubsetTable {
public:
    SubsetTable(std::size_t ground_size, std::size_t k);

    /// Process-wide cached table; thread-safe.
    static const SubsetTable& get(std::size_t ground_size, std::size_t k);

    std::size_t ground_size() const noexcept { return ground_; }
    std::size_t k() const noexcept { return k_; }
    std::size_t size() const noexcept { return count_; }
    std::span<const std::uint8_t> operator[](std::size_t s) const { return {flat_.data() + s * k_, k_}; }

private:
    std::size_t ground_;
    std::size_t k_;
    std::size_t count_ = 0;
    std::vector<std::uint8_t> flat_;
};

std::uint64_t binomial(std::size_t n, std::size_t k);

} // namespace lkp
