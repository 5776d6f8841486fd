#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "lkp/dataset.hpp"
#include "lkp/diversity.hpp"
#include "lkp/error.hpp"
#include "lkp/linalg.hpp"
#include "oracles.hpp"

using namespace lkp;

namespace {

InteractionDataset single_user(std::vector<ItemId> history, std::vector<CategoryId> categories) {
    InteractionDataset d;
    d.num_users = 1;
    d.num_items = categories.size();
    d.num_categories = *std::max_element(categories.begin(), categories.end()) + 1;
    d.positives = {std::move(history)};
    d.categories = std::move(categories);
    return d;
}

std::size_t distinct(const std::vector<ItemId>& items, const std::vector<CategoryId>& cats) {
    std::set<CategoryId> s;
    for (ItemId i : items) s.insert(cats[i]);
    return s.size();
}

} // namespace

TEST_CASE("gaussian_entry") {
    const std::vector<double> a{0.3, -1.0, 2.0};
    CHECK(gaussian_entry(a, a, 0.7) == 1.0);
    const double sigma = 0.5;
    const std::vector<double> b{0.3 + sigma * std::sqrt(2.0), -1.0, 2.0};
    CHECK(gaussian_entry(a, b, sigma) == doctest::Approx(std::exp(-1.0)));
    CHECK(gaussian_entry(a, b, sigma) == gaussian_entry(b, a, sigma));
    CHECK_THROWS_AS(gaussian_entry(a, b, 0.0), ContractViolation);
    CHECK_THROWS_AS(gaussian_entry(a, std::vector<double>{1.0}, 1.0), ContractViolation);
}

TEST_CASE("gaussian kernel matrices are symmetric with unit diagonal") {
    std::mt19937_64 rng(1);
    EmbeddingTable emb(1, 20, 4);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& x : emb.item_data()) x = dist(rng);
    const double sigma = median_pairwise_distance(emb, 1000, 3);
    CHECK(sigma > 0.0);
    CHECK(sigma == median_pairwise_distance(emb, 1000, 3));
    const auto K = DiversityKernel::gaussian(sigma);
    for (ItemId i = 0; i < 20; ++i) {
        CHECK(K.entry(i, i, emb) == 1.0);
        for (ItemId j = 0; j < 20; ++j) {
            CHECK(K.entry(i, j, emb) == K.entry(j, i, emb));
            CHECK(K.entry(i, j, emb) > 0.0);
            CHECK(K.entry(i, j, emb) <= 1.0);
        }
    }
    CHECK_THROWS_AS(DiversityKernel::gaussian(-1.0), ContractViolation);
}

TEST_CASE("pretrained kernel entries and PSD minors") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(30 * 4);
    for (double& x : v) x = dist(rng);
    const auto K = DiversityKernel::pretrained(30, 4, v);
    const EmbeddingTable unused;
    CHECK(K.frozen());
    CHECK(K.entry(3, 5, unused) == doctest::Approx(std::inner_product(v.begin() + 12, v.begin() + 16, v.begin() + 20, 0.0)));
    CHECK_THROWS_AS(K.entry(30, 0, unused), LookupError);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ItemId> items(30);
        std::iota(items.begin(), items.end(), 0);
        std::shuffle(items.begin(), items.end(), rng);
        const std::size_t s = 2 + trial % 10;  // includes sizes above the rank
        SymMatrix m(s);
        for (std::size_t a = 0; a < s; ++a)
            for (std::size_t b = a; b < s; ++b) m.set(a, b, K.entry(items[a], items[b], unused));
        for (double ev : eigenvalues_sym(m)) CHECK(ev >= -1e-9);
    }
    CHECK_THROWS_AS(DiversityKernel::pretrained(30, 4, std::vector<double>(10)), ContractViolation);
}

TEST_CASE("diverse pair construction") {
    SUBCASE("single-category history yields nothing") {
        const auto d = single_user({0, 1, 2, 3, 4, 5}, std::vector<CategoryId>(12, 0));
        CHECK(build_diverse_training_pairs(d, 3, 3, 1).pairs.empty());
    }
    SUBCASE("categories a,b,c,a,b with set size 3") {
        const auto d = single_user({0, 1, 2, 3, 4}, {0, 1, 2, 0, 1, 2, 0, 1, 2, 0});
        const auto pairs = build_diverse_training_pairs(d, 3, 3, 1);
        REQUIRE(pairs.pairs.size() == 3);
        CHECK(pairs.pairs[0].plus == std::vector<ItemId>{0, 1, 2});
        for (const auto& p : pairs.pairs) {
            CHECK(p.minus.size() == 3);
            for (ItemId i : p.minus) CHECK(i >= 5);
        }
    }
    SUBCASE("history shorter than the set size is skipped") {
        const auto d = single_user({0, 1}, {0, 1, 2, 0, 1, 2, 0, 1});
        CHECK(build_diverse_training_pairs(d, 3, 2, 1).pairs.empty());
    }
    SUBCASE("bad arguments") {
        const auto d = single_user({0, 1, 2}, {0, 1, 2, 0, 1, 2, 0, 1});
        CHECK_THROWS_AS(build_diverse_training_pairs(d, 1, 1, 1), ContractViolation);
        CHECK_THROWS_AS(build_diverse_training_pairs(d, 3, 4, 1), ContractViolation);
    }
}

TEST_CASE("diverse pair count matches an independent recount on synthetic data") {
    const auto data = make_synthetic(50, 100, 6, 4);
    const std::size_t size = 4, min_cats = 3;
    const auto pairs = build_diverse_training_pairs(data, size, min_cats, 9);
    std::size_t expected = 0;
    for (const auto& s : data.splits) {
        for (std::size_t start = 0; start + size <= s.train.size(); ++start) {
            std::vector<ItemId> w(s.train.begin() + static_cast<long>(start),
                                  s.train.begin() + static_cast<long>(start + size));
            if (distinct(w, data.categories) >= min_cats) ++expected;
        }
    }
    CHECK(pairs.pairs.size() == expected);
    CHECK(pairs.set_size == size);
    for (std::size_t p = 0; p < pairs.pairs.size(); ++p) {
        CHECK(pairs.pairs[p].plus.size() == size);
        CHECK(pairs.pairs[p].minus.size() == size);
        CHECK(distinct(pairs.pairs[p].plus, data.categories) >= min_cats);
    }
    const auto again = build_diverse_training_pairs(data, size, min_cats, 9);
    CHECK(again.pairs.size() == pairs.pairs.size());
    CHECK(again.pairs.back().minus == pairs.pairs.back().minus);
}

TEST_CASE("log_det_gram gradient matches central differences") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t rank = 6;
        std::vector<double> v(12 * rank);
        for (double& x : v) x = u(rng);
        auto K = DiversityKernel::pretrained(12, rank, v, false);
        const std::vector<ItemId> items{1, 4, 7, 9};
        std::vector<double> grad;
        log_det_gram(K, items, kKernelJitter, &grad);
        std::vector<double*> coords;
        for (ItemId i : items)
            for (double& x : K.factor(i)) coords.push_back(&x);
        const auto fd = oracle::central_difference(coords, [&] { return log_det_gram(K, items, kKernelJitter); });
        CHECK(oracle::relative_error(grad, fd) < 1e-4);
    }
}

TEST_CASE("kernel training") {
    KernelTrainOptions opts;
    opts.rank = 8;
    opts.seed = 3;
    SUBCASE("zero pairs leave V at its initialization") {
        DiversePairSet none{{}, 4};
        opts.epochs = 5;
        const auto trained = train_diversity_kernel(none, 20, opts);
        opts.epochs = 0;
        const auto init = train_diversity_kernel(none, 20, opts);
        CHECK(trained.factors() == init.factors());
        CHECK(trained.frozen());
    }
    SUBCASE("single pair: objective strictly increases over the first 10 evaluations") {
        DiversePairSet one{{{{0, 1, 2, 3}, {4, 5, 6, 7}}}, 4};
        opts.epochs = 200;
        opts.learning_rate = 1e-2;
        std::vector<double> trace;
        train_diversity_kernel(one, 20, opts, [&](std::size_t, double obj) { trace.push_back(obj); });
        REQUIRE(trace.size() == 201);
        for (std::size_t e = 1; e < 10; ++e) CHECK(trace[e] > trace[e - 1]);
    }
    SUBCASE("unit rows") {
        DiversePairSet one{{{{0, 1, 2, 3}, {4, 5, 6, 7}}}, 4};
        opts.epochs = 20;
        const auto K = train_diversity_kernel(one, 20, opts);
        const EmbeddingTable unused;
        for (ItemId i = 0; i < 20; ++i) CHECK(K.entry(i, i, unused) == doctest::Approx(1.0));
    }
    SUBCASE("rank below the set size is rejected") {
        DiversePairSet one{{{{0, 1, 2, 3}, {4, 5, 6, 7}}}, 4};
        opts.rank = 3;
        CHECK_THROWS_AS(train_diversity_kernel(one, 20, opts), ContractViolation);
    }
}

TEST_CASE("trained kernel prefers category-diverse sets over single-category sets") {
    // Histories rotate through the categories, so every training window is diverse.
    const std::size_t cats = 10, per_cat = 40, users = 200, length = 30;
    InteractionDataset data;
    data.num_users = users;
    data.num_items = cats * per_cat;
    data.num_categories = cats;
    for (ItemId i = 0; i < data.num_items; ++i) data.categories.push_back(i % cats);
    std::mt19937_64 rng(21);
    for (std::size_t u = 0; u < users; ++u) {
        std::vector<ItemId> h;
        const std::size_t offset = rng() % cats;
        while (h.size() < length) {
            const ItemId item = static_cast<ItemId>((offset + h.size()) % cats + cats * (rng() % per_cat));
            if (std::find(h.begin(), h.end(), item) == h.end()) h.push_back(item);
        }
        data.positives.push_back(std::move(h));
    }
    const auto pairs = build_diverse_training_pairs(data, 5, default_min_categories(5), 21);
    KernelTrainOptions opts;
    opts.seed = 21;
    const auto K = train_diversity_kernel(pairs, data.num_items, opts);

    std::vector<std::vector<ItemId>> by_cat(cats);
    for (ItemId i = 0; i < data.num_items; ++i) by_cat[data.categories[i]].push_back(i);
    double diverse = 0.0, mono = 0.0;
    const int sets = 500;
    for (int t = 0; t < sets; ++t) {
        std::vector<CategoryId> order(cats);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<ItemId> d, m;
        for (std::size_t c = 0; c < 5; ++c) d.push_back(by_cat[order[c]][rng() % per_cat]);
        auto pool = by_cat[order[0]];
        std::shuffle(pool.begin(), pool.end(), rng);
        m.assign(pool.begin(), pool.begin() + 5);
        diverse += log_det_gram(K, d, kKernelJitter) / sets;
        mono += log_det_gram(K, m, kKernelJitter) / sets;
    }
    CHECK(diverse > mono);
}

TEST_CASE("kernel checkpoint round trip") {
    std::mt19937_64 rng(6);
    std::vector<double> v(7 * 3);
    for (double& x : v) x = std::normal_distribution<double>(0, 1)(rng);
    const auto K = DiversityKernel::pretrained(7, 3, v);
    const auto path = std::filesystem::temp_directory_path() / "lkp_test_kernel.bin";
    save_kernel(K, path);
    const auto L = load_kernel(path);
    CHECK(L.factors() == K.factors());
    CHECK(L.rank() == 3);
    CHECK(L.num_items() == 7);
    CHECK(L.frozen());
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_kernel(path), DataError);
    CHECK_THROWS_AS(save_kernel(DiversityKernel::gaussian(1.0), path), ContractViolation);
}
