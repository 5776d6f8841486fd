#include "lkp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "lkp/error.hpp"
#include "lkp/log.hpp"
#include "lkp/rng.hpp"

namespace lkp {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string location(const std::filesystem::path& path, std::size_t line_no) {
    return path.string() + ":" + std::to_string(line_no);
}

struct RawRating {
    std::string user;
    std::string item;
    std::optional<double> timestamp;
};

std::unordered_map<std::string, std::string> read_categories(const std::filesystem::path& path) {
    std::unordered_map<std::string, std::string> out;
    std::ifstream in(path);
    if (!in) throw DataError("cannot open categories file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        if (first) {
            first = false;
            std::string head(fields[0]);
            std::transform(head.begin(), head.end(), head.begin(), [](unsigned char c) { return std::tolower(c); });
            if (head == "item_id" || head == "item" || head == "itemid") continue;
        }
        if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
            throw DataError("malformed categories line at " + location(path, line_no));
        }
        // Multi-genre fields like "Action|Comedy" keep the first listed genre.
        std::string_view cat = fields[1];
        if (auto bar = cat.find('|'); bar != std::string_view::npos) cat = trim(cat.substr(0, bar));
        out.emplace(std::string(fields[0]), std::string(cat));
    }
    return out;
}

} // namespace

std::size_t InteractionDataset::num_interactions() const noexcept {
    std::size_t total = 0;
    for (const auto& p : positives) total += p.size();
    return total;
}

void InteractionDataset::validate(std::size_t min_degree) const {
    if (positives.size() != num_users) throw DataError("positives size does not match num_users");
    if (categories.size() != num_items) throw DataError("every item needs exactly one category");
    for (CategoryId c : categories)
        if (c >= num_categories) throw DataError("category id out of range");
    std::vector<std::size_t> item_degree(num_items, 0);
    for (std::size_t u = 0; u < num_users; ++u) {
        std::vector<ItemId> sorted = positives[u];
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw DataError("user " + std::to_string(u) + " has duplicate positives");
        }
        for (ItemId i : sorted) {
            if (i >= num_items) throw DataError("item id out of range for user " + std::to_string(u));
            ++item_degree[i];
        }
        if (positives[u].size() < min_degree) {
            throw DataError("user " + std::to_string(u) + " has fewer than " + std::to_string(min_degree) +
                            " interactions");
        }
        if (!splits.empty()) {
            if (splits.size() != num_users) throw DataError("splits size does not match num_users");
            std::vector<ItemId> joined;
            for (const auto* part : {&splits[u].train, &splits[u].validation, &splits[u].test})
                joined.insert(joined.end(), part->begin(), part->end());
            std::sort(joined.begin(), joined.end());
            if (joined != sorted) throw DataError("splits of user " + std::to_string(u) + " do not partition positives");
        }
    }
    for (std::size_t i = 0; i < num_items; ++i) {
        if (item_degree[i] < min_degree) {
            throw DataError("item " + std::to_string(i) + " has fewer than " + std::to_string(min_degree) +
                            " interactions");
        }
    }
}

std::vector<std::vector<ItemId>> sorted_lists(const std::vector<std::vector<ItemId>>& lists) {
    auto out = lists;
    for (auto& l : out) std::sort(l.begin(), l.end());
    return out;
}

std::vector<std::vector<ItemId>> train_lists(const InteractionDataset& data) {
    if (!data.has_splits()) return data.positives;
    std::vector<std::vector<ItemId>> out(data.num_users);
    for (std::size_t u = 0; u < data.num_users; ++u) out[u] = data.splits[u].train;
    return out;
}

bool contains_sorted(const std::vector<ItemId>& sorted, ItemId item) {
    return std::binary_search(sorted.begin(), sorted.end(), item);
}

InteractionDataset ingest(const std::filesystem::path& ratings_path, const std::filesystem::path& categories_path,
                          const IngestOptions& options) {
    std::unordered_map<std::string, std::string> category_of;
    const bool have_categories = !categories_path.empty();
    if (have_categories) category_of = read_categories(categories_path);

    std::ifstream in(ratings_path);
    if (!in) throw DataError("cannot open ratings file " + ratings_path.string());

    std::vector<RawRating> kept;
    std::unordered_set<std::string> seen_pairs;
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        if (first) {
            first = false;
            if (fields.size() >= 3 && !parse_double(fields[2])) continue;  // header row
        }
        if (fields.size() < 3 || fields.size() > 4 || fields[0].empty() || fields[1].empty()) {
            throw DataError("malformed ratings line at " + location(ratings_path, line_no));
        }
        auto rating = parse_double(fields[2]);
        if (!rating) throw DataError("non-numeric rating at " + location(ratings_path, line_no));
        std::optional<double> ts;
        if (fields.size() == 4 && !fields[3].empty()) {
            ts = parse_double(fields[3]);
            if (!ts) throw DataError("non-numeric timestamp at " + location(ratings_path, line_no));
        }
        if (*rating < options.threshold) continue;
        std::string key = std::string(fields[0]) + '\x1f' + std::string(fields[1]);
        if (!seen_pairs.insert(std::move(key)).second) continue;
        kept.push_back({std::string(fields[0]), std::string(fields[1]), ts});
    }

    // Iterative degree filter until no user or item falls below the floor.
    std::vector<bool> alive(kept.size(), true);
    while (true) {
        std::unordered_map<std::string, std::size_t> user_deg, item_deg;
        for (std::size_t r = 0; r < kept.size(); ++r) {
            if (!alive[r]) continue;
            ++user_deg[kept[r].user];
            ++item_deg[kept[r].item];
        }
        bool changed = false;
        for (std::size_t r = 0; r < kept.size(); ++r) {
            if (!alive[r]) continue;
            if (user_deg[kept[r].user] < options.min_degree || item_deg[kept[r].item] < options.min_degree) {
                alive[r] = false;
                changed = true;
            }
        }
        if (!changed) break;
    }

    InteractionDataset data;
    std::unordered_map<std::string, UserId> user_index;
    std::unordered_map<std::string, ItemId> item_index;
    std::vector<std::vector<std::pair<std::optional<double>, ItemId>>> history;
    for (std::size_t r = 0; r < kept.size(); ++r) {
        if (!alive[r]) continue;
        const auto& rec = kept[r];
        auto [uit, unew] = user_index.try_emplace(rec.user, static_cast<UserId>(data.user_labels.size()));
        if (unew) {
            data.user_labels.push_back(rec.user);
            history.emplace_back();
        }
        auto [iit, inew] = item_index.try_emplace(rec.item, static_cast<ItemId>(data.item_labels.size()));
        if (inew) data.item_labels.push_back(rec.item);
        history[uit->second].emplace_back(rec.timestamp, iit->second);
    }
    if (data.user_labels.empty()) {
        throw DataError("ingest produced an empty dataset (threshold " + std::to_string(options.threshold) +
                        ", min degree " + std::to_string(options.min_degree) + ")");
    }

    data.num_users = data.user_labels.size();
    data.num_items = data.item_labels.size();
    data.positives.resize(data.num_users);
    for (std::size_t u = 0; u < data.num_users; ++u) {
        auto& h = history[u];
        const bool all_timed = std::all_of(h.begin(), h.end(), [](const auto& e) { return e.first.has_value(); });
        if (all_timed) {
            std::stable_sort(h.begin(), h.end(), [](const auto& a, const auto& b) { return *a.first < *b.first; });
        }
        data.positives[u].reserve(h.size());
        for (const auto& e : h) data.positives[u].push_back(e.second);
    }

    std::unordered_map<std::string, CategoryId> cat_index;
    data.categories.resize(data.num_items);
    for (std::size_t i = 0; i < data.num_items; ++i) {
        std::string cat = "none";
        if (have_categories) {
            auto it = category_of.find(data.item_labels[i]);
            if (it == category_of.end()) {
                throw DataError("item " + data.item_labels[i] + " has no entry in " + categories_path.string());
            }
            cat = it->second;
        }
        auto [cit, cnew] = cat_index.try_emplace(cat, static_cast<CategoryId>(data.category_labels.size()));
        if (cnew) data.category_labels.push_back(cat);
        data.categories[i] = cit->second;
    }
    data.num_categories = data.category_labels.size();
    return data;
}

InteractionDataset split(InteractionDataset data, std::array<double, 3> ratios, std::uint64_t seed,
                         std::size_t min_train) {
    const double total = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(total - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
        throw ContractViolation("split ratios must be non-negative and sum to 1");
    }
    data.splits.assign(data.num_users, {});
    for (std::size_t u = 0; u < data.num_users; ++u) {
        const auto& pos = data.positives[u];
        const std::size_t m = pos.size();
        std::size_t n_test = static_cast<std::size_t>(std::floor(ratios[2] * static_cast<double>(m) + 1e-9));
        std::size_t n_val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(m) + 1e-9));
        if (n_test == 0 && m >= 2 && ratios[2] > 0) n_test = 1;
        std::size_t n_train = m - n_test - n_val;
        while (n_train < min_train && n_val > 0) --n_val, ++n_train;
        while (n_train < min_train && n_test > 1) --n_test, ++n_train;
        if (n_val == 0 && ratios[1] > 0) {
            log_info("user " + std::to_string(u) + " has an empty validation split (" + std::to_string(m) +
                     " positives)");
        }

        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        Rng rng = make_rng(seed, stream::kSplit, u);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<int> bucket(m, 0);  // 0 train, 1 validation, 2 test
        for (std::size_t r = 0; r < n_test; ++r) bucket[order[r]] = 2;
        for (std::size_t r = n_test; r < n_test + n_val; ++r) bucket[order[r]] = 1;

        auto& s = data.splits[u];
        for (std::size_t p = 0; p < m; ++p) {
            (bucket[p] == 0 ? s.train : bucket[p] == 1 ? s.validation : s.test).push_back(pos[p]);
        }
    }
    return data;
}

SyntheticLayout synthetic_layout(std::size_t num_users, std::size_t num_items, std::size_t num_categories,
                                 std::uint64_t seed) {
    if (num_users == 0 || num_items == 0 || num_categories == 0) {
        throw ContractViolation("make_synthetic: all sizes must be >= 1");
    }
    SyntheticLayout layout;
    layout.num_groups = std::max<std::size_t>(1, num_categories / 2);
    Rng rng = make_rng(seed, stream::kSynthetic, 0);
    std::uniform_int_distribution<std::uint32_t> group(0, static_cast<std::uint32_t>(layout.num_groups - 1));
    std::bernoulli_distribution coin(0.5);
    layout.user_group.resize(num_users);
    for (auto& g : layout.user_group) g = group(rng);
    layout.item_group.resize(num_items);
    layout.item_category.resize(num_items);
    for (std::size_t i = 0; i < num_items; ++i) {
        layout.item_group[i] = group(rng);
        layout.item_category[i] =
            static_cast<CategoryId>((2 * layout.item_group[i] + (coin(rng) ? 1 : 0)) % num_categories);
    }
    return layout;
}

InteractionDataset make_synthetic(std::size_t num_users, std::size_t num_items, std::size_t num_categories,
                                  std::uint64_t seed) {
    constexpr std::size_t kMinDegree = 10;
    if (num_users < kMinDegree || num_items < kMinDegree) {
        throw ContractViolation("make_synthetic needs at least 10 users and 10 items");
    }
    const SyntheticLayout layout = synthetic_layout(num_users, num_items, num_categories, seed);

    std::vector<std::vector<std::uint8_t>> adj(num_users, std::vector<std::uint8_t>(num_items, 0));
    Rng rng = make_rng(seed, stream::kSynthetic, 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t u = 0; u < num_users; ++u) {
        for (std::size_t i = 0; i < num_items; ++i) {
            const double p = layout.user_group[u] == layout.item_group[i] ? kSyntheticInGroupRate
                                                                            : kSyntheticCrossGroupRate;
            adj[u][i] = unif(rng) < p ? 1 : 0;
        }
    }

    // Top up low-degree users and items, preferring in-group partners.
    auto pick = [&](std::size_t count, auto&& preferred, auto&& taken) -> std::size_t {
        std::vector<std::size_t> pool, fallback;
        for (std::size_t x = 0; x < count; ++x) {
            if (taken(x)) continue;
            (preferred(x) ? pool : fallback).push_back(x);
        }
        auto& from = pool.empty() ? fallback : pool;
        std::uniform_int_distribution<std::size_t> d(0, from.size() - 1);
        return from[d(rng)];
    };
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t u = 0; u < num_users; ++u) {
            std::size_t deg = static_cast<std::size_t>(std::count(adj[u].begin(), adj[u].end(), 1));
            for (; deg < kMinDegree; ++deg) {
                const std::size_t i = pick(
                    num_items, [&](std::size_t x) { return layout.item_group[x] == layout.user_group[u]; },
                    [&](std::size_t x) { return adj[u][x] != 0; });
                adj[u][i] = 1;
                changed = true;
            }
        }
        for (std::size_t i = 0; i < num_items; ++i) {
            std::size_t deg = 0;
            for (std::size_t u = 0; u < num_users; ++u) deg += adj[u][i];
            for (; deg < kMinDegree; ++deg) {
                const std::size_t u = pick(
                    num_users, [&](std::size_t x) { return layout.user_group[x] == layout.item_group[i]; },
                    [&](std::size_t x) { return adj[x][i] != 0; });
                adj[u][i] = 1;
                changed = true;
            }
        }
    }

    InteractionDataset data;
    data.num_users = num_users;
    data.num_items = num_items;
    data.num_categories = num_categories;
    data.categories = layout.item_category;
    data.positives.resize(num_users);
    for (std::size_t u = 0; u < num_users; ++u) {
        for (std::size_t i = 0; i < num_items; ++i)
            if (adj[u][i]) data.positives[u].push_back(static_cast<ItemId>(i));
        Rng order_rng = make_rng(seed, stream::kSynthetic, 2 + u);
        std::shuffle(data.positives[u].begin(), data.positives[u].end(), order_rng);
    }
    for (std::size_t u = 0; u < num_users; ++u) data.user_labels.push_back("u" + std::to_string(u));
    for (std::size_t i = 0; i < num_items; ++i) data.item_labels.push_back("i" + std::to_string(i));
    for (std::size_t c = 0; c < num_categories; ++c) data.category_labels.push_back("c" + std::to_string(c));
    return split(std::move(data), {0.7, 0.1, 0.2}, seed);
}

void save_dataset(const InteractionDataset& data, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "lkp-dataset";
    j["version"] = 1;
    j["num_users"] = data.num_users;
    j["num_items"] = data.num_items;
    j["num_categories"] = data.num_categories;
    j["positives"] = data.positives;
    j["categories"] = data.categories;
    j["user_labels"] = data.user_labels;
    j["item_labels"] = data.item_labels;
    j["category_labels"] = data.category_labels;
    nlohmann::json splits = nlohmann::json::array();
    for (const auto& s : data.splits) {
        splits.push_back({{"train", s.train}, {"validation", s.validation}, {"test", s.test}});
    }
    j["splits"] = std::move(splits);
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << j.dump() << '\n';
}

InteractionDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset " + path.string());
    InteractionDataset data;
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        if (j.at("format") != "lkp-dataset" || j.at("version") != 1) {
            throw DataError("unsupported dataset container in " + path.string());
        }
        j.at("num_users").get_to(data.num_users);
        j.at("num_items").get_to(data.num_items);
        j.at("num_categories").get_to(data.num_categories);
        j.at("positives").get_to(data.positives);
        j.at("categories").get_to(data.categories);
        j.at("user_labels").get_to(data.user_labels);
        j.at("item_labels").get_to(data.item_labels);
        j.at("category_labels").get_to(data.category_labels);
        for (const auto& s : j.at("splits")) {
            UserSplit us;
            s.at("train").get_to(us.train);
            s.at("validation").get_to(us.validation);
            s.at("test").get_to(us.test);
            data.splits.push_back(std::move(us));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed dataset " + path.string() + ": " + e.what());
    }
    data.validate();
    return data;
}

} // namespace lkp
