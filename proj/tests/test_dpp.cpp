#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "lkp/diversity.hpp"
#include "lkp/dpp.hpp"
#include "lkp/error.hpp"
#include "oracles.hpp"

using namespace lkp;

namespace {

EmbeddingTable random_embeddings(std::size_t users, std::size_t items, std::size_t dim, double scale,
                                 std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, scale);
    EmbeddingTable e(users, items, dim);
    for (double& x : e.user_data()) x = dist(rng);
    for (double& x : e.item_data()) x = dist(rng);
    return e;
}

DiversityKernel random_kernel(std::size_t items, std::size_t rank, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(rank)));
    std::vector<double> v(items * rank);
    for (double& x : v) x = dist(rng);
    return DiversityKernel::pretrained(items, rank, std::move(v));
}

const GroundSetInstance kFivePlusFive{0, {0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}};

} // namespace

TEST_CASE("instance validation") {
    CHECK_NOTHROW(validate_instance(kFivePlusFive, true));
    CHECK_THROWS_AS(validate_instance({0, {1}, {2}}), ContractViolation);
    CHECK_THROWS_AS(validate_instance({0, {1, 2}, {}}), ContractViolation);
    CHECK_THROWS_AS(validate_instance({0, {1, 2}, {2, 3}}), ContractViolation);
    CHECK_THROWS_AS(validate_instance({0, {1, 1}, {3}}), ContractViolation);
    CHECK_THROWS_AS(validate_instance({0, {1, 2}, {3}}, true), ContractViolation);
    GroundSetInstance big{0, {}, {}};
    for (ItemId i = 0; i < 9; ++i) big.targets.push_back(i);
    for (ItemId i = 9; i < 17; ++i) big.negatives.push_back(i);
    CHECK_THROWS_AS(validate_instance(big), ContractViolation);
}

TEST_CASE("predict_quality") {
    const std::vector<double> zero(4, 0.0), u{1, 0, 0, 0}, big{50, 0, 0, 0}, v{1, 2, 3, 4};
    CHECK(predict_quality(zero, v) == 1.0);
    CHECK(predict_quality(u, v) == doctest::Approx(std::exp(1.0)));
    CHECK(predict_quality(big, v) == doctest::Approx(std::exp(20.0)));
    CHECK(predict_quality(big, std::vector<double>{-1, 0, 0, 0}) == doctest::Approx(std::exp(-20.0)));
    CHECK_THROWS_AS(predict_quality(u, std::vector<double>{1, 2}), ContractViolation);

    // Bounded and monotone in the score.
    double prev = 0.0;
    for (double s = -60; s <= 60; s += 0.5) {
        const double q = predict_quality(std::vector<double>{s}, std::vector<double>{1.0});
        CHECK(q >= prev);
        CHECK(q <= std::exp(20.0));
        CHECK(q > 0.0);
        prev = q;
    }
}

TEST_CASE("personalized kernel entries") {
    std::mt19937_64 rng(1);
    const auto emb = random_embeddings(2, 12, 4, 0.5, rng);
    const auto K = random_kernel(12, 6, rng);
    const GroundSetInstance inst{1, {3, 7}, {0, 11, 5}};
    const auto L = build_personalized_kernel(inst, emb, K);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(L.qualities[i] == doctest::Approx(predict_quality(emb.user(1), emb.item(inst.item_at(i)))));
        for (std::size_t j = 0; j < 5; ++j) {
            const double expect = L.qualities[i] * K.entry(inst.item_at(i), inst.item_at(j), emb) * L.qualities[j] +
                                  (i == j ? kKernelDiagonalJitter : 0.0);
            CHECK(L.matrix(i, j) == doctest::Approx(expect).epsilon(1e-14));
        }
    }
    for (double ev : eigenvalues_sym(L.matrix)) CHECK(ev >= -1e-9);

    const auto id = DiversityKernel::identity(12);
    const auto D = build_personalized_kernel(inst, emb, id);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(D.matrix(i, i) == doctest::Approx(D.qualities[i] * D.qualities[i] + 1e-6));
        for (std::size_t j = 0; j < 5; ++j)
            if (i != j) CHECK(D.matrix(i, j) == 0.0);
    }

    EmbeddingTable zero_users = emb;
    std::fill(zero_users.user_data().begin(), zero_users.user_data().end(), 0.0);
    const auto U = build_personalized_kernel(inst, zero_users, K);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(U.matrix(i, j) == doctest::Approx(K.entry(inst.item_at(i), inst.item_at(j), emb) +
                                                     (i == j ? 1e-6 : 0.0)));

    CHECK_THROWS_AS(build_personalized_kernel({1, {3, 70}, {0}}, emb, K), LookupError);
    CHECK_THROWS_AS(build_personalized_kernel({9, {3, 7}, {0}}, emb, K), LookupError);
}

TEST_CASE("uniform k-DPP gives 1/252 per subset") {
    const EmbeddingTable zero(1, 10, 8);
    const auto K = DiversityKernel::identity(10);
    const auto L = build_personalized_kernel(kFivePlusFive, zero, K);
    const auto subsets = enumerate_k_subsets(10, 5);
    REQUIRE(subsets.size() == 252);
    for (const auto& s : subsets) CHECK(kdpp_log_probability(L, s) == doctest::Approx(std::log(1.0 / 252.0)));
    const std::size_t wrong[] = {0, 1, 2};
    CHECK_THROWS_AS(kdpp_log_probability(L, wrong), ContractViolation);
}

TEST_CASE("diagonal kernel: probability proportional to product of squared qualities") {
    std::mt19937_64 rng(2);
    const auto emb = random_embeddings(1, 10, 4, 0.5, rng);
    const auto K = DiversityKernel::identity(10);
    const auto L = build_personalized_kernel(kFivePlusFive, emb, K, 0.0);
    const std::size_t a[] = {0, 1, 2, 3, 4}, b[] = {5, 6, 7, 8, 9};
    double pa = 1, pb = 1;
    for (std::size_t i : a) pa *= L.qualities[i] * L.qualities[i];
    for (std::size_t i : b) pb *= L.qualities[i] * L.qualities[i];
    CHECK(kdpp_log_probability(L, a) - kdpp_log_probability(L, b) == doctest::Approx(std::log(pa / pb)));
}

TEST_CASE("normalization, oracle equivalence, scaling covariance and permutation equivariance") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t k = 2 + trial % 4;
        const std::size_t n = 1 + trial % 6;
        const auto emb = random_embeddings(2, 30, 6, 0.4, rng);
        const auto K = random_kernel(30, 16, rng);
        std::vector<ItemId> pool(30);
        std::iota(pool.begin(), pool.end(), 0);
        std::shuffle(pool.begin(), pool.end(), rng);
        GroundSetInstance inst{0, {pool.begin(), pool.begin() + static_cast<long>(k)},
                               {pool.begin() + static_cast<long>(k), pool.begin() + static_cast<long>(k + n)}};
        const auto L = build_personalized_kernel(inst, emb, K);

        const double log_z = log_normalizer(L);
        oracle::Matrix m(k + n, std::vector<double>(k + n));
        for (std::size_t i = 0; i < k + n; ++i)
            for (std::size_t j = 0; j < k + n; ++j) m[i][j] = L.matrix(i, j);
        CHECK(std::abs(std::exp(log_z) / oracle::minor_sum(m, k) - 1.0) < 1e-8);

        double total = 0.0;
        for (const auto& s : oracle::k_subsets(k + n, k)) total += std::exp(kdpp_log_probability(L, s, log_z));
        CHECK(total == doctest::Approx(1.0).epsilon(1e-8));

        // Scaling every quality by c leaves probabilities unchanged.
        PersonalizedKernel scaled = L;
        const double c = 3.0;
        for (std::size_t i = 0; i < k + n; ++i)
            for (std::size_t j = i; j < k + n; ++j) scaled.matrix.set(i, j, L.matrix(i, j) * c * c);
        const auto first = enumerate_k_subsets(k + n, k).front();
        CHECK(kdpp_log_probability(scaled, first) == doctest::Approx(kdpp_log_probability(L, first)).epsilon(1e-9));

        // Reversing the negatives permutes probabilities accordingly.
        GroundSetInstance rev = inst;
        std::reverse(rev.negatives.begin(), rev.negatives.end());
        const auto R = build_personalized_kernel(rev, emb, K);
        const auto subsets = enumerate_k_subsets(k + n, k);
        for (std::size_t s = 0; s < subsets.size(); s += 7) {
            std::vector<std::size_t> mapped;
            for (std::size_t p : subsets[s]) mapped.push_back(p < k ? p : k + (n - 1 - (p - k)));
            std::sort(mapped.begin(), mapped.end());
            CHECK(kdpp_log_probability(R, mapped) == doctest::Approx(kdpp_log_probability(L, subsets[s])).epsilon(1e-9));
        }
    }
}

TEST_CASE("subset enumeration") {
    const auto s32 = enumerate_k_subsets(3, 2);
    REQUIRE(s32.size() == 3);
    CHECK(s32[0] == std::vector<std::size_t>{0, 1});
    CHECK(s32[1] == std::vector<std::size_t>{0, 2});
    CHECK(s32[2] == std::vector<std::size_t>{1, 2});
    CHECK(enumerate_k_subsets(10, 5).size() == 252);
    CHECK(enumerate_k_subsets(6, 6).size() == 1);
    CHECK_THROWS_AS(enumerate_k_subsets(21, 3), EnumerationTooLarge);
    CHECK(binomial(10, 5) == 252);
    CHECK(binomial(14, 7) == 3432);
    CHECK(binomial(3, 4) == 0);

    const auto& table = SubsetTable::get(8, 3);
    const auto list = enumerate_k_subsets(8, 3);
    REQUIRE(table.size() == list.size());
    for (std::size_t s = 0; s < list.size(); ++s)
        for (std::size_t a = 0; a < 3; ++a) CHECK(table[s][a] == list[s][a]);
}
