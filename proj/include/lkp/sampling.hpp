#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lkp/dataset.hpp"
#include "lkp/dpp.hpp"
#include "lkp/rng.hpp"

namespace lkp {

enum class SamplerMode { R, S };

struct EpochSchedule {
    std::vector<GroundSetInstance> instances;
    SamplerMode mode = SamplerMode::S;
    std::size_t k = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::size_t skipped_users = 0;  // users with fewer than k training positives
};

/// Start offsets of the k-sized windows tiling a history of length m: stride
/// k, with a final window backed up to end - k when m is not a multiple of k.
std::vector<std::size_t> tile_starts(std::size_t m, std::size_t k);

/// Chronological windows over each user's training history.
EpochSchedule schedule_S(const InteractionDataset& data, std::size_t k, std::size_t n, std::uint64_t seed);

/// Like schedule_S but each user's history is shuffled (seeded) before tiling.
EpochSchedule schedule_R(const InteractionDataset& data, std::size_t k, std::size_t n, std::uint64_t seed);

EpochSchedule make_schedule(SamplerMode mode, const InteractionDataset& data, std::size_t k, std::size_t n,
                            std::uint64_t seed);

/// n distinct items drawn uniformly from those not in `observed_sorted`.
std::vector<ItemId> sample_negatives(const std::vector<ItemId>& observed_sorted, std::size_t num_items,
                                     std::size_t n, Rng& rng);

} // namespace lkp
