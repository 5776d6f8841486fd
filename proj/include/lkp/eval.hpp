#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

#include "lkp/dataset.hpp"
#include "lkp/diversity.hpp"
#include "lkp/dpp.hpp"
#include "lkp/embedding.hpp"

namespace lkp {

/// Top-N items by dot-product score, skipping `exclude_sorted`; ties go to the
/// lower item id. Non-finite scores are clamped into the finite range (NaN
/// ranks last).
std::vector<ItemId> recommend_top_n(const EmbeddingTable& model, UserId user, std::size_t n,
                                    const std::vector<ItemId>& exclude_sorted);

struct Metrics {
    double recall = 0.0;
    double ndcg = 0.0;
    double cc = 0.0;
    double f = 0.0;
};

/// Harmonic mean of the accuracy term (recall + ndcg) / 2 and category coverage.
double f_score(double recall, double ndcg, double cc);

/// Metrics of one ranked list at cutoff n. std::nullopt when the user has no
/// test positives (excluded from averages).
std::optional<Metrics> compute_metrics(std::span<const ItemId> recommendations,
                                       std::span<const ItemId> test_positives,
                                       std::span<const CategoryId> categories, std::size_t total_categories,
                                       std::size_t n);

enum class EvalSplit { validation, test };

struct EvalReport {
    EvalSplit split = EvalSplit::test;
    std::vector<std::size_t> cutoffs;
    std::vector<Metrics> metrics;  // macro averages, parallel to cutoffs
    std::size_t num_users_evaluated = 0;

    const Metrics& at(std::size_t cutoff) const;
    nlohmann::json to_json() const;
};

inline constexpr std::size_t kDefaultCutoffs[] = {5, 10, 20};

/// Validation ranks exclude training positives; test ranks exclude training
/// and validation positives.
EvalReport evaluate(const EmbeddingTable& model, const InteractionDataset& data, EvalSplit split,
                    std::span<const std::size_t> cutoffs = kDefaultCutoffs, std::size_t threads = 1);

/// Mean per-subset k-DPP probability grouped by how many targets a subset holds.
struct TrendReport {
    std::size_t epoch = 0;
    std::size_t k = 0;
    std::size_t n = 0;
    std::size_t num_instances = 0;
    std::vector<double> group_mean;          // index = target count; NaN for empty groups
    std::vector<std::uint64_t> group_size;   // C(k, g) * C(n, k - g)

    nlohmann::json to_json() const;
};

TrendReport probability_trend(const EmbeddingTable& model, const DiversityKernel& kernel,
                              std::span<const GroundSetInstance> instances, std::size_t k, std::size_t epoch = 0);

/// `count` instances drawn without replacement (seeded) from a schedule.
std::vector<GroundSetInstance> sample_instances(std::span<const GroundSetInstance> pool, std::size_t count,
                                                std::uint64_t seed);

/// CSV rows `epoch,target_count,mean_prob` (header included).
void write_trend_csv(std::span<const TrendReport> reports, std::ostream& out);

} // namespace lkp
