#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lkp/types.hpp"

namespace lkp {

/// Matrix-factorization parameters: one d-dimensional latent vector per user
/// and per item, stored row-major.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::size_t num_users, std::size_t num_items, std::size_t dim);

    std::size_t num_users() const noexcept { return num_users_; }
    std::size_t num_items() const noexcept { return num_items_; }
    std::size_t dim() const noexcept { return dim_; }

    std::span<double> user(UserId u) { return {users_.data() + std::size_t{u} * dim_, dim_}; }
    std::span<const double> user(UserId u) const { return {users_.data() + std::size_t{u} * dim_, dim_}; }
    std::span<double> item(ItemId i) { return {items_.data() + std::size_t{i} * dim_, dim_}; }
    std::span<const double> item(ItemId i) const { return {items_.data() + std::size_t{i} * dim_, dim_}; }

    /// Throwing accessors used where ids come from outside (instances, files).
    std::span<const double> user_checked(UserId u) const;
    std::span<const double> item_checked(ItemId i) const;

    std::vector<double>& user_data() noexcept { return users_; }
    std::vector<double>& item_data() noexcept { return items_; }
    const std::vector<double>& user_data() const noexcept { return users_; }
    const std::vector<double>& item_data() const noexcept { return items_; }

    bool all_finite() const noexcept;

    friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

private:
    std::size_t num_users_ = 0;
    std::size_t num_items_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> users_;
    std::vector<double> items_;
};

/// i.i.d. normal(0, 0.01) entries from the run seed.
EmbeddingTable init_embeddings(std::size_t num_users, std::size_t num_items, std::size_t dim,
                               std::uint64_t seed);

double dot(std::span<const double> a, std::span<const double> b);

/// Checkpoint: text header `lkp-model v1 <users> <items> <d>\n`, then user rows
/// and item rows as little-endian float64.
void save_model(const EmbeddingTable& model, const std::filesystem::path& path);
EmbeddingTable load_model(const std::filesystem::path& path);

} // namespace lkp
