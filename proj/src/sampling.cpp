#include "lkp/sampling.hpp"

#include <algorithm>

#include "lkp/error.hpp"
#include "lkp/log.hpp"
#include "lkp/rng.hpp"

namespace lkp {

std::vector<std::size_t> tile_starts(std::size_t m, std::size_t k) {
    std::vector<std::size_t> starts;
    if (k == 0 || m < k) return starts;
    for (std::size_t s = 0; s + k <= m; s += k) starts.push_back(s);
    if (m % k != 0) starts.push_back(m - k);
    return starts;
}

std::vector<ItemId> sample_negatives(const std::vector<ItemId>& observed_sorted, std::size_t num_items,
                                     std::size_t n, Rng& rng) {
    if (num_items < observed_sorted.size() + n) {
        throw ContractViolation("not enough unobserved items to draw " + std::to_string(n) + " negatives");
    }
    std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(num_items - 1));
    std::vector<ItemId> out;
    out.reserve(n);
    while (out.size() < n) {
        const ItemId cand = pick(rng);
        if (contains_sorted(observed_sorted, cand)) continue;
        if (std::find(out.begin(), out.end(), cand) != out.end()) continue;
        out.push_back(cand);
    }
    return out;
}

namespace {

EpochSchedule build(SamplerMode mode, const InteractionDataset& data, std::size_t k, std::size_t n,
                    std::uint64_t seed) {
    if (k < 2) throw ContractViolation("sampling requires k >= 2");
    if (n < 1) throw ContractViolation("sampling requires n >= 1");
    EpochSchedule sched;
    sched.mode = mode;
    sched.k = k;
    sched.n = n;
    sched.seed = seed;

    const auto histories = train_lists(data);
    const auto observed = sorted_lists(histories);
    for (std::size_t u = 0; u < data.num_users; ++u) {
        std::vector<ItemId> h = histories[u];
        if (h.empty()) continue;
        if (h.size() < k) {
            ++sched.skipped_users;
            continue;
        }
        Rng rng = make_rng(seed, stream::kSchedule, u);
        if (mode == SamplerMode::R) std::shuffle(h.begin(), h.end(), rng);
        for (std::size_t start : tile_starts(h.size(), k)) {
            GroundSetInstance inst;
            inst.user = static_cast<UserId>(u);
            inst.targets.assign(h.begin() + static_cast<std::ptrdiff_t>(start),
                                h.begin() + static_cast<std::ptrdiff_t>(start + k));
            inst.negatives = sample_negatives(observed[u], data.num_items, n, rng);
            sched.instances.push_back(std::move(inst));
        }
    }
    if (sched.skipped_users > 0) {
        log_info(std::to_string(sched.skipped_users) + " users have fewer than k = " + std::to_string(k) +
                 " training positives and were not scheduled");
    }
    return sched;
}

} // namespace

EpochSchedule schedule_S(const InteractionDataset& data, std::size_t k, std::size_t n, std::uint64_t seed) {
    return build(SamplerMode::S, data, k, n, seed);
}

EpochSchedule schedule_R(const InteractionDataset& data, std::size_t k, std::size_t n, std::uint64_t seed) {
    return build(SamplerMode::R, data, k, n, seed);
}

EpochSchedule make_schedule(SamplerMode mode, const InteractionDataset& data, std::size_t k, std::size_t n,
                            std::uint64_t seed) {
    return build(mode, data, k, n, seed);
}

} // namespace lkp
