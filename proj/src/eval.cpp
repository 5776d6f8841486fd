#include "lkp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lkp/error.hpp"
#include "lkp/parallel.hpp"
#include "lkp/rng.hpp"

namespace lkp {

std::vector<ItemId> recommend_top_n(const EmbeddingTable& model, UserId user, std::size_t n,
                                    const std::vector<ItemId>& exclude_sorted) {
    if (n == 0) throw ContractViolation("recommend_top_n: N must be >= 1");
    const auto u = model.user_checked(user);
    constexpr double kMax = std::numeric_limits<double>::max();
    std::vector<std::pair<double, ItemId>> scored;
    scored.reserve(model.num_items());
    for (std::size_t i = 0; i < model.num_items(); ++i) {
        const auto id = static_cast<ItemId>(i);
        if (contains_sorted(exclude_sorted, id)) continue;
        double s = dot(u, model.item(id));
        s = std::isnan(s) ? -kMax : std::clamp(s, -kMax, kMax);
        scored.emplace_back(s, id);
    }
    const std::size_t take = std::min(n, scored.size());
    auto better = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
    std::vector<ItemId> out(take);
    for (std::size_t r = 0; r < take; ++r) out[r] = scored[r].second;
    return out;
}

double f_score(double recall, double ndcg, double cc) {
    const double q = 0.5 * (recall + ndcg);
    return q + cc > 0.0 ? 2.0 * q * cc / (q + cc) : 0.0;
}

std::optional<Metrics> compute_metrics(std::span<const ItemId> recommendations,
                                       std::span<const ItemId> test_positives,
                                       std::span<const CategoryId> categories, std::size_t total_categories,
                                       std::size_t n) {
    if (n > recommendations.size()) {
        throw ContractViolation("compute_metrics: cutoff " + std::to_string(n) + " exceeds list length " +
                                std::to_string(recommendations.size()));
    }
    if (test_positives.empty()) return std::nullopt;
    if (total_categories == 0) throw ContractViolation("compute_metrics: total_categories must be positive");

    std::vector<ItemId> truth(test_positives.begin(), test_positives.end());
    std::sort(truth.begin(), truth.end());
    std::vector<CategoryId> seen;
    double dcg = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const ItemId item = recommendations[r];
        if (std::binary_search(truth.begin(), truth.end(), item)) {
            ++hits;
            dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        }
        if (item >= categories.size()) throw LookupError("no category for item " + std::to_string(item));
        const CategoryId c = categories[item];
        if (std::find(seen.begin(), seen.end(), c) == seen.end()) seen.push_back(c);
    }
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(n, truth.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);

    Metrics m;
    m.recall = static_cast<double>(hits) / static_cast<double>(truth.size());
    m.ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
    m.cc = static_cast<double>(seen.size()) / static_cast<double>(total_categories);
    m.f = f_score(m.recall, m.ndcg, m.cc);
    return m;
}

const Metrics& EvalReport::at(std::size_t cutoff) const {
    for (std::size_t c = 0; c < cutoffs.size(); ++c)
        if (cutoffs[c] == cutoff) return metrics[c];
    throw LookupError("cutoff " + std::to_string(cutoff) + " was not evaluated");
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["split"] = split == EvalSplit::test ? "test" : "validation";
    j["num_users_evaluated"] = num_users_evaluated;
    nlohmann::json per = nlohmann::json::object();
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
        per[std::to_string(cutoffs[c])] = {{"recall", metrics[c].recall},
                                           {"ndcg", metrics[c].ndcg},
                                           {"cc", metrics[c].cc},
                                           {"f", metrics[c].f}};
    }
    j["metrics"] = std::move(per);
    return j;
}

EvalReport evaluate(const EmbeddingTable& model, const InteractionDataset& data, EvalSplit split,
                    std::span<const std::size_t> cutoffs, std::size_t threads) {
    if (!data.has_splits()) throw ContractViolation("evaluate: dataset has no train/validation/test split");
    if (cutoffs.empty()) throw ContractViolation("evaluate: no cutoffs requested");
    const std::size_t max_n = *std::max_element(cutoffs.begin(), cutoffs.end());

    std::vector<std::vector<std::optional<Metrics>>> per_user(data.num_users);
    parallel_for(data.num_users, threads, [&](std::size_t u) {
        const auto& s = data.splits[u];
        const auto& truth = split == EvalSplit::test ? s.test : s.validation;
        if (truth.empty()) return;
        std::vector<ItemId> exclude = s.train;
        if (split == EvalSplit::test) exclude.insert(exclude.end(), s.validation.begin(), s.validation.end());
        std::sort(exclude.begin(), exclude.end());
        const auto recs = recommend_top_n(model, static_cast<UserId>(u), max_n, exclude);
        per_user[u].reserve(cutoffs.size());
        for (std::size_t c : cutoffs) {
            per_user[u].push_back(compute_metrics(recs, truth, data.categories, data.num_categories,
                                                  std::min(c, recs.size())));
        }
    });

    EvalReport report;
    report.split = split;
    report.cutoffs.assign(cutoffs.begin(), cutoffs.end());
    report.metrics.assign(cutoffs.size(), Metrics{});
    for (std::size_t u = 0; u < data.num_users; ++u) {
        if (per_user[u].empty() || !per_user[u].front()) continue;
        ++report.num_users_evaluated;
        for (std::size_t c = 0; c < cutoffs.size(); ++c) {
            const Metrics& m = *per_user[u][c];
            report.metrics[c].recall += m.recall;
            report.metrics[c].ndcg += m.ndcg;
            report.metrics[c].cc += m.cc;
            report.metrics[c].f += m.f;
        }
    }
    if (report.num_users_evaluated > 0) {
        const double inv = 1.0 / static_cast<double>(report.num_users_evaluated);
        for (auto& m : report.metrics) {
            m.recall *= inv;
            m.ndcg *= inv;
            m.cc *= inv;
            m.f *= inv;
        }
    }
    return report;
}

TrendReport probability_trend(const EmbeddingTable& model, const DiversityKernel& kernel,
                              std::span<const GroundSetInstance> instances, std::size_t k, std::size_t epoch) {
    TrendReport report;
    report.epoch = epoch;
    report.k = k;
    if (instances.empty()) return report;
    const std::size_t n = instances.front().n();
    report.n = n;
    report.group_size.assign(k + 1, 0);
    for (std::size_t g = 0; g <= k; ++g) report.group_size[g] = binomial(k, g) * binomial(n, k - g);

    std::vector<double> sums(k + 1, 0.0);
    for (const auto& inst : instances) {
        if (inst.k() != k || inst.n() != n) throw ContractViolation("probability_trend: mixed instance shapes");
        const PersonalizedKernel L = build_personalized_kernel(inst, model, kernel);
        const double log_z = log_normalizer(L);
        const SubsetTable& table = SubsetTable::get(L.ground_size(), k);
        std::vector<double> group(k + 1, 0.0);
        std::vector<std::size_t> idx(k);
        for (std::size_t s = 0; s < table.size(); ++s) {
            const auto sub = table[s];
            std::size_t targets = 0;
            for (std::size_t a = 0; a < k; ++a) {
                idx[a] = sub[a];
                if (sub[a] < k) ++targets;
            }
            group[targets] += std::exp(kdpp_log_probability(L, idx, log_z));
        }
        for (std::size_t g = 0; g <= k; ++g)
            if (report.group_size[g] > 0) sums[g] += group[g] / static_cast<double>(report.group_size[g]);
    }
    report.num_instances = instances.size();
    report.group_mean.assign(k + 1, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t g = 0; g <= k; ++g)
        if (report.group_size[g] > 0) report.group_mean[g] = sums[g] / static_cast<double>(instances.size());
    return report;
}

nlohmann::json TrendReport::to_json() const {
    nlohmann::json groups = nlohmann::json::array();
    for (std::size_t g = 0; g < group_mean.size(); ++g) {
        if (group_size[g] == 0) continue;
        groups.push_back({{"target_count", g}, {"mean_prob", group_mean[g]}, {"group_size", group_size[g]}});
    }
    return {{"epoch", epoch}, {"k", k}, {"n", n}, {"num_instances", num_instances}, {"groups", groups}};
}

std::vector<GroundSetInstance> sample_instances(std::span<const GroundSetInstance> pool, std::size_t count,
                                                std::uint64_t seed) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(seed, stream::kTrend);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(count, idx.size()));
    std::vector<GroundSetInstance> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(pool[i]);
    return out;
}

void write_trend_csv(std::span<const TrendReport> reports, std::ostream& out) {
    out << "epoch,target_count,mean_prob\n";
    out.precision(17);
    for (const auto& r : reports)
        for (std::size_t g = 0; g < r.group_mean.size(); ++g)
            if (r.group_size[g] > 0) out << r.epoch << ',' << g << ',' << r.group_mean[g] << '\n';
}

} // namespace lkp
