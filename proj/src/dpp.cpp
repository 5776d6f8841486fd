#include "lkp/dpp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>

#include "lkp/error.hpp"

namespace lkp {

std::vector<ItemId> GroundSetInstance::ground_items() const {
    std::vector<ItemId> items(targets);
    items.insert(items.end(), negatives.begin(), negatives.end());
    return items;
}

void validate_instance(const GroundSetInstance& instance, bool require_n_equals_k) {
    const std::size_t k = instance.k();
    const std::size_t n = instance.n();
    if (k < 2) throw ContractViolation("ground-set instance needs k >= 2, got k = " + std::to_string(k));
    if (n < 1) throw ContractViolation("ground-set instance needs n >= 1");
    if (k + n > kMaxOrder) throw ContractViolation("ground set k + n must not exceed 16");
    if (require_n_equals_k && n != k) {
        throw ContractViolation("the negative-subset objective requires n == k (got k = " + std::to_string(k) +
                                ", n = " + std::to_string(n) + ")");
    }
    auto items = instance.ground_items();
    std::sort(items.begin(), items.end());
    if (std::adjacent_find(items.begin(), items.end()) != items.end()) {
        throw ContractViolation("ground-set items must be distinct and targets disjoint from negatives");
    }
}

double predict_quality(std::span<const double> user_vec, std::span<const double> item_vec) {
    const double s = dot(user_vec, item_vec);
    return std::exp(std::clamp(s, -kQualityClamp, kQualityClamp));
}

PersonalizedKernel build_personalized_kernel(const GroundSetInstance& instance, const EmbeddingTable& embeddings,
                                             const DiversityKernel& kernel, double jitter) {
    const std::size_t m = instance.ground_size();
    if (m == 0 || m > kMaxOrder) throw ContractViolation("ground set size must be in [1, 16]");
    PersonalizedKernel out{SymMatrix(m), SymMatrix(m), std::vector<double>(m), std::vector<double>(m), jitter,
                           &instance};
    const auto user = embeddings.user_checked(instance.user);
    std::array<ItemId, kMaxOrder> items{};
    for (std::size_t p = 0; p < m; ++p) {
        items[p] = instance.item_at(p);
        const auto item = embeddings.item_checked(items[p]);
        out.scores[p] = dot(user, item);
        out.qualities[p] = std::exp(std::clamp(out.scores[p], -kQualityClamp, kQualityClamp));
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i; j < m; ++j) {
            const double kij = kernel.entry(items[i], items[j], embeddings);
            out.diversity.set(i, j, kij);
            out.matrix.set(i, j, out.qualities[i] * kij * out.qualities[j] + (i == j ? jitter : 0.0));
        }
    }
    return out;
}

double log_normalizer(const PersonalizedKernel& kernel) {
    const auto eig = eigenvalues_sym(kernel.matrix);
    return log_esp(kernel.k(), eig);
}

double kdpp_log_probability(const PersonalizedKernel& kernel, std::span<const std::size_t> subset, double log_z) {
    if (subset.size() != kernel.k()) {
        throw ContractViolation("a k-DPP only assigns probability to subsets of size k = " +
                                std::to_string(kernel.k()) + ", got " + std::to_string(subset.size()));
    }
    const std::size_t s = subset.size();
    std::array<double, kMaxOrder * kMaxOrder> sub;
    for (std::size_t a = 0; a < s; ++a) {
        if (subset[a] >= kernel.ground_size()) throw ContractViolation("subset index outside the ground set");
        for (std::size_t b = 0; b < s; ++b) sub[a * s + b] = kernel.matrix(subset[a], subset[b]);
    }
    SmallLu lu({sub.data(), s * s}, s);
    if (lu.sign() <= 0) return -std::numeric_limits<double>::infinity();
    return lu.log_abs_det() - log_z;
}

double kdpp_log_probability(const PersonalizedKernel& kernel, std::span<const std::size_t> subset) {
    if (subset.size() != kernel.k()) {
        throw ContractViolation("a k-DPP only assigns probability to subsets of size k = " +
                                std::to_string(kernel.k()) + ", got " + std::to_string(subset.size()));
    }
    return kdpp_log_probability(kernel, subset, log_normalizer(kernel));
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

std::vector<std::vector<std::size_t>> enumerate_k_subsets(std::size_t ground_size, std::size_t k) {
    if (ground_size > kEnumerationGuard) {
        throw EnumerationTooLarge("refusing to enumerate subsets of a ground set of size " +
                                  std::to_string(ground_size) + " (limit " + std::to_string(kEnumerationGuard) + ")");
    }
    std::vector<std::vector<std::size_t>> out;
    if (k > ground_size) return out;
    out.reserve(binomial(ground_size, k));
    std::vector<std::size_t> cur(k);
    for (std::size_t i = 0; i < k; ++i) cur[i] = i;
    while (true) {
        out.push_back(cur);
        // advance to the next combination in lexicographic order
        std::size_t i = k;
        while (i > 0 && cur[i - 1] == ground_size - k + (i - 1)) --i;
        if (i == 0) break;
        ++cur[i - 1];
        for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
    }
    return out;
}

SubsetTable::SubsetTable(std::size_t ground_size, std::size_t k) : ground_(ground_size), k_(k) {
    const auto subsets = enumerate_k_subsets(ground_size, k);
    count_ = subsets.size();
    flat_.reserve(count_ * k);
    for (const auto& s : subsets)
        for (std::size_t x : s) flat_.push_back(static_cast<std::uint8_t>(x));
}

const SubsetTable& SubsetTable::get(std::size_t ground_size, std::size_t k) {
    static std::mutex mutex;
    static std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<SubsetTable>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[{ground_size, k}];
    if (!slot) slot = std::make_unique<SubsetTable>(ground_size, k);
    return *slot;
}

} // namespace lkp
