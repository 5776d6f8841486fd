#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lkp/types.hpp"

namespace lkp {

struct UserSplit {
    std::vector<ItemId> train;       // chronological
    std::vector<ItemId> validation;  // chronological
    std::vector<ItemId> test;        // chronological

    friend bool operator==(const UserSplit&, const UserSplit&) = default;
};

/// Binary implicit feedback with one category per item. `positives[u]` is in
/// chronological order; `splits` is empty until split() has been applied.
struct InteractionDataset {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::size_t num_categories = 0;
    std::vector<std::vector<ItemId>> positives;
    std::vector<CategoryId> categories;
    std::vector<UserSplit> splits;

    // Original identifiers, indexed by dense id.
    std::vector<std::string> user_labels;
    std::vector<std::string> item_labels;
    std::vector<std::string> category_labels;

    bool has_splits() const noexcept { return splits.size() == num_users && num_users > 0; }
    std::size_t num_interactions() const noexcept;

    /// Throws DataError on any violated structural invariant. `min_degree`
    /// additionally enforces the per-user and per-item interaction floor.
    void validate(std::size_t min_degree = 0) const;

    friend bool operator==(const InteractionDataset&, const InteractionDataset&) = default;
};

/// Per-user sorted copies of item lists, for membership tests.
std::vector<std::vector<ItemId>> sorted_lists(const std::vector<std::vector<ItemId>>& lists);
std::vector<std::vector<ItemId>> train_lists(const InteractionDataset& data);
bool contains_sorted(const std::vector<ItemId>& sorted, ItemId item);

struct IngestOptions {
    double threshold = 5.0;     // keep ratings >= threshold
    std::size_t min_degree = 10;
};

/// Reads `user_id,item_id,rating[,timestamp]` (optional header) and
/// `item_id,category[,...]` CSVs, binarizes, filters users and items below
/// min_degree to a fixpoint and re-indexes densely in order of first
/// appearance. An empty categories path puts every item in one category.
InteractionDataset ingest(const std::filesystem::path& ratings_path,
                          const std::filesystem::path& categories_path, const IngestOptions& options = {});

/// Per-user seeded random partition into train/validation/test. Remainders go
/// to train; each split keeps chronological order.
InteractionDataset split(InteractionDataset data, std::array<double, 3> ratios = {0.7, 0.1, 0.2},
                         std::uint64_t seed = 0, std::size_t min_train = 0);

struct SyntheticLayout {
    std::size_t num_groups = 0;
    std::vector<std::uint32_t> user_group;
    std::vector<std::uint32_t> item_group;
    std::vector<CategoryId> item_category;
};

inline constexpr double kSyntheticInGroupRate = 0.3;
inline constexpr double kSyntheticCrossGroupRate = 0.02;

/// Latent block structure behind make_synthetic(). There are
/// max(1, num_categories / 2) groups; an item of group g takes category 2g or
/// 2g+1 (mod num_categories), so each group spans two categories.
SyntheticLayout synthetic_layout(std::size_t num_users, std::size_t num_items, std::size_t num_categories,
                                 std::uint64_t seed);

/// Block-structured desk-scale dataset, already split 70/10/20 with the same seed.
InteractionDataset make_synthetic(std::size_t num_users, std::size_t num_items, std::size_t num_categories,
                                  std::uint64_t seed);

void save_dataset(const InteractionDataset& data, const std::filesystem::path& path);
InteractionDataset load_dataset(const std::filesystem::path& path);

} // namespace lkp
