#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "lkp/dataset.hpp"
#include "lkp/embedding.hpp"
#include "lkp/types.hpp"

namespace lkp {

enum class KernelMode { pretrained, gaussian };

/// Item-item diversity kernel. In pretrained mode K = V^T V with one rank-r
/// factor row per item, evaluated on demand. In gaussian mode entries are a
/// Gaussian similarity of the live item embeddings.
class DiversityKernel {
public:
    static DiversityKernel pretrained(std::size_t num_items, std::size_t rank, std::vector<double> factors,
                                      bool frozen = true);
    /// Pretrained kernel with V = I (K is the identity). Only sensible for small catalogs.
    static DiversityKernel identity(std::size_t num_items);
    static DiversityKernel gaussian(double sigma);

    KernelMode mode() const noexcept { return mode_; }
    bool frozen() const noexcept { return frozen_; }
    void set_frozen(bool frozen) noexcept { frozen_ = frozen; }

    std::size_t num_items() const noexcept { return num_items_; }
    std::size_t rank() const noexcept { return rank_; }
    double sigma() const noexcept { return sigma_; }
    void set_sigma(double sigma);

    std::span<const double> factor(ItemId i) const { return {v_.data() + std::size_t{i} * rank_, rank_}; }
    std::span<double> factor(ItemId i) { return {v_.data() + std::size_t{i} * rank_, rank_}; }
    const std::vector<double>& factors() const noexcept { return v_; }

    /// K_ij. `embeddings` is only consulted in gaussian mode. Throws LookupError on unknown ids.
    double entry(ItemId i, ItemId j, const EmbeddingTable& embeddings) const;

private:
    KernelMode mode_ = KernelMode::pretrained;
    bool frozen_ = true;
    std::size_t num_items_ = 0;
    std::size_t rank_ = 0;
    double sigma_ = 1.0;
    std::vector<double> v_;
};

/// exp(-||a - b||^2 / (2 sigma^2)).
double gaussian_entry(std::span<const double> a, std::span<const double> b, double sigma);

/// Median Euclidean distance over `sample_pairs` random pairs of distinct item embeddings.
double median_pairwise_distance(const EmbeddingTable& embeddings, std::size_t sample_pairs, std::uint64_t seed);

struct DiversePair {
    std::vector<ItemId> plus;   // observed, category-diverse window
    std::vector<ItemId> minus;  // sampled unobserved items
};

struct DiversePairSet {
    std::vector<DiversePair> pairs;
    std::size_t set_size = 0;
};

inline std::size_t default_min_categories(std::size_t set_size) { return (set_size + 1) / 2 + 1; }

/// Sliding windows (stride 1) over each user's chronological training
/// history; windows spanning at least `min_categories` categories are paired
/// with `set_size` uniformly drawn items the user has not interacted with.
DiversePairSet build_diverse_training_pairs(const InteractionDataset& data, std::size_t set_size,
                                            std::size_t min_categories, std::uint64_t seed);

inline constexpr double kKernelJitter = 1e-6;

/// log det(V_T V_T^T + jitter I). When `grad` is given it receives the
/// |T| x rank gradient with respect to the factor rows of T.
double log_det_gram(const DiversityKernel& kernel, std::span<const ItemId> items, double jitter,
                    std::vector<double>* grad = nullptr);

/// Sum over pairs of log det(K_T+) - log det(K_T-).
double diversity_objective(const DiversePairSet& pairs, const DiversityKernel& kernel,
                           double jitter = kKernelJitter);

struct KernelTrainOptions {
    std::size_t rank = 64;
    std::size_t epochs = 10;
    double learning_rate = 1e-2;
    double jitter = kKernelJitter;
    std::uint64_t seed = 0;
    bool unit_rows = true;  // project each factor row back to unit length after every step, so K_ii = 1
};

/// Stochastic gradient ascent on the pair objective, one step per pair per
/// epoch in seeded shuffled order. `on_epoch(epoch, objective)` is called
/// before training (epoch 0) and after each epoch. Returns a frozen kernel.
DiversityKernel train_diversity_kernel(const DiversePairSet& pairs, std::size_t num_items,
                                       const KernelTrainOptions& options,
                                       const std::function<void(std::size_t, double)>& on_epoch = {});

void save_kernel(const DiversityKernel& kernel, const std::filesystem::path& path);
DiversityKernel load_kernel(const std::filesystem::path& path);

} // namespace lkp
