#include <doctest.h>

#include <cmath>
#include <random>

#include "lkp/dataset.hpp"
#include "lkp/error.hpp"
#include "lkp/objectives.hpp"
#include "lkp/sampling.hpp"
#include "oracles.hpp"

using namespace lkp;

namespace {

struct World {
    EmbeddingTable emb;
    DiversityKernel kernel;
};

World random_world(std::mt19937_64& rng, std::size_t items = 30, std::size_t dim = 6, std::size_t rank = 16) {
    std::normal_distribution<double> e(0.0, 0.3), v(0.0, 1.0 / std::sqrt(static_cast<double>(rank)));
    World w{EmbeddingTable(3, items, dim), {}};
    for (double& x : w.emb.user_data()) x = e(rng);
    for (double& x : w.emb.item_data()) x = e(rng);
    std::vector<double> f(items * rank);
    for (double& x : f) x = v(rng);
    w.kernel = DiversityKernel::pretrained(items, rank, std::move(f));
    return w;
}

GroundSetInstance random_instance(std::mt19937_64& rng, std::size_t items, std::size_t k, std::size_t n) {
    std::vector<ItemId> pool(items);
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    GroundSetInstance inst;
    inst.user = static_cast<UserId>(rng() % 3);
    inst.targets.assign(pool.begin(), pool.begin() + static_cast<long>(k));
    inst.negatives.assign(pool.begin() + static_cast<long>(k), pool.begin() + static_cast<long>(k + n));
    return inst;
}

// L over the ground set, built directly from the definition.
oracle::Matrix oracle_kernel(const GroundSetInstance& inst, const EmbeddingTable& emb, const DiversityKernel& K) {
    const auto items = inst.ground_items();
    std::vector<double> q;
    for (ItemId i : items) {
        double s = 0.0;
        for (std::size_t d = 0; d < emb.dim(); ++d) s += emb.user(inst.user)[d] * emb.item(i)[d];
        q.push_back(std::exp(std::clamp(s, -20.0, 20.0)));
    }
    oracle::Matrix L(items.size(), std::vector<double>(items.size()));
    for (std::size_t a = 0; a < items.size(); ++a)
        for (std::size_t b = 0; b < items.size(); ++b)
            L[a][b] = q[a] * K.entry(items[a], items[b], emb) * q[b] + (a == b ? 1e-6 : 0.0);
    return L;
}

double oracle_probability(const oracle::Matrix& L, std::size_t k, std::size_t first) {
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), first);
    return oracle::det(oracle::principal(L, idx)) / oracle::minor_sum(L, k);
}

std::vector<double*> instance_coords(EmbeddingTable& emb, const GroundSetInstance& inst) {
    std::vector<double*> c;
    for (double& x : emb.user(inst.user)) c.push_back(&x);
    for (ItemId i : inst.ground_items())
        for (double& x : emb.item(i)) c.push_back(&x);
    return c;
}

std::vector<double> instance_grad(const GradientBundle& g, const GroundSetInstance& inst, std::size_t dim) {
    std::vector<double> out(g.user_grad);
    for (ItemId i : inst.ground_items()) {
        const auto* row = g.item_grad(i);
        for (std::size_t d = 0; d < dim; ++d) out.push_back(row ? (*row)[d] : 0.0);
    }
    return out;
}

void descend(EmbeddingTable& emb, const GradientBundle& g, double lr) {
    for (std::size_t d = 0; d < emb.dim(); ++d) emb.user(g.user)[d] -= lr * g.user_grad[d];
    for (const auto& ig : g.item_grads)
        for (std::size_t d = 0; d < emb.dim(); ++d) emb.item(ig.item)[d] -= lr * ig.grad[d];
}

} // namespace

TEST_CASE("uniform instance losses") {
    const EmbeddingTable zero(1, 10, 4);
    const auto K = DiversityKernel::identity(10);
    const GroundSetInstance inst{0, {0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}};
    CHECK(lkp_ps(inst, zero, K).loss == doctest::Approx(std::log(252.0)).epsilon(1e-9));
    CHECK(lkp_ps(inst, zero, K).loss == doctest::Approx(5.529).epsilon(1e-3));
    const double nps = -(std::log(1.0 / 252.0) + std::log(251.0 / 252.0));
    CHECK(lkp_nps(inst, zero, K).loss == doctest::Approx(nps).epsilon(1e-9));
    CHECK(lkp_nps(inst, zero, K).loss == doctest::Approx(5.533).epsilon(1e-3));
}

TEST_CASE("set losses match the determinant oracle") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto w = random_world(rng);
        const std::size_t k = 2 + trial % 4;
        const auto ps_inst = random_instance(rng, 30, k, 1 + trial % 5);
        const auto L = oracle_kernel(ps_inst, w.emb, w.kernel);
        CHECK(lkp_ps(ps_inst, w.emb, w.kernel).loss ==
              doctest::Approx(-std::log(oracle_probability(L, k, 0))).epsilon(1e-9));

        const auto nps_inst = random_instance(rng, 30, k, k);
        const auto Ln = oracle_kernel(nps_inst, w.emb, w.kernel);
        const double expected =
            -(std::log(oracle_probability(Ln, k, 0)) + std::log(1.0 - oracle_probability(Ln, k, k)));
        CHECK(lkp_nps(nps_inst, w.emb, w.kernel).loss == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("set objective gradients match central differences") {
    std::mt19937_64 rng(12);
    for (bool nps : {false, true}) {
        for (bool gaussian : {false, true}) {
            for (int trial = 0; trial < 20; ++trial) {
                auto w = random_world(rng);
                const std::size_t k = 2 + trial % 4;
                const std::size_t n = nps ? k : 1 + trial % 6;
                const DiversityKernel K = gaussian ? DiversityKernel::gaussian(0.6) : w.kernel;
                const auto inst = random_instance(rng, 30, k, n);
                auto f = [&] { return nps ? lkp_nps(inst, w.emb, K) : lkp_ps(inst, w.emb, K); };
                const auto g = f();
                CHECK(g.all_finite());
                const auto fd = oracle::central_difference(instance_coords(w.emb, inst), [&] { return f().loss; });
                CHECK(oracle::relative_error(instance_grad(g, inst, w.emb.dim()), fd) < 1e-4);
            }
        }
    }
}

TEST_CASE("frozen pretrained kernel: gradients touch only ground-set rows") {
    std::mt19937_64 rng(13);
    auto w = random_world(rng);
    const auto inst = random_instance(rng, 30, 4, 3);
    const auto g = lkp_ps(inst, w.emb, w.kernel);
    const auto ground = inst.ground_items();
    for (const auto& ig : g.item_grads) CHECK(std::find(ground.begin(), ground.end(), ig.item) != ground.end());
    CHECK(g.user == inst.user);
}

TEST_CASE("enumeration normalizer gradient equals the eigenvalue route") {
    std::mt19937_64 rng(14);
    for (bool gaussian : {false, true}) {
        for (int trial = 0; trial < 20; ++trial) {
            auto w = random_world(rng);
            const DiversityKernel K = gaussian ? DiversityKernel::gaussian(0.8) : w.kernel;
            const std::size_t k = 2 + trial % 5;
            const auto inst = random_instance(rng, 30, k, 1 + trial % 6);
            const auto g = log_normalizer_gradient(inst, w.emb, K);
            auto via_eigen = [&] {
                const auto pk = build_personalized_kernel(inst, w.emb, K);
                return log_esp(k, eigenvalues_sym(pk.matrix));
            };
            CHECK(g.loss == doctest::Approx(via_eigen()).epsilon(1e-9));
            const auto fd = oracle::central_difference(instance_coords(w.emb, inst), via_eigen);
            CHECK(oracle::relative_error(instance_grad(g, inst, w.emb.dim()), fd) < 1e-4);
        }
    }
}

TEST_CASE("lkp_ps is invariant under relabeling interchangeable negatives") {
    std::mt19937_64 rng(15);
    auto w = random_world(rng);
    auto inst = random_instance(rng, 30, 4, 4);
    const double base = lkp_ps(inst, w.emb, w.kernel).loss;

    auto shuffled = inst;
    std::reverse(shuffled.negatives.begin(), shuffled.negatives.end());
    CHECK(lkp_ps(shuffled, w.emb, w.kernel).loss == doctest::Approx(base).epsilon(1e-12));

    // Item 29 becomes a clone of the first negative and replaces it.
    const ItemId original = inst.negatives[0];
    REQUIRE(std::find(inst.targets.begin(), inst.targets.end(), 29) == inst.targets.end());
    REQUIRE(std::find(inst.negatives.begin(), inst.negatives.end(), 29) == inst.negatives.end());
    std::vector<double> v = w.kernel.factors();
    std::copy_n(v.begin() + original * 16, 16, v.begin() + 29 * 16);
    const auto K = DiversityKernel::pretrained(30, 16, v);
    std::copy(w.emb.item(original).begin(), w.emb.item(original).end(), w.emb.item(29).begin());
    auto relabeled = inst;
    relabeled.negatives[0] = 29;
    CHECK(lkp_ps(relabeled, w.emb, K).loss == doctest::Approx(lkp_ps(inst, w.emb, K).loss).epsilon(1e-12));
}

TEST_CASE("descent on one instance raises the target probability") {
    std::mt19937_64 rng(16);
    auto w = random_world(rng);
    const auto inst = random_instance(rng, 30, 5, 5);
    const double before = -lkp_ps(inst, w.emb, w.kernel).loss;
    for (int step = 0; step < 50; ++step) descend(w.emb, lkp_ps(inst, w.emb, w.kernel), 0.05);
    CHECK(-lkp_ps(inst, w.emb, w.kernel).loss > before);
}

TEST_CASE("after NPS training the targets outweigh the negatives") {
    std::mt19937_64 rng(17);
    auto w = random_world(rng);
    const auto inst = random_instance(rng, 30, 5, 5);
    for (int step = 0; step < 200; ++step) descend(w.emb, lkp_nps(inst, w.emb, w.kernel), 0.05);
    const auto pk = build_personalized_kernel(inst, w.emb, w.kernel);
    const std::vector<std::size_t> plus{0, 1, 2, 3, 4}, minus{5, 6, 7, 8, 9};
    CHECK(kdpp_log_probability(pk, plus) > kdpp_log_probability(pk, minus));
}

TEST_CASE("set objective contracts") {
    std::mt19937_64 rng(18);
    auto w = random_world(rng);
    CHECK_THROWS_AS(lkp_nps(random_instance(rng, 30, 4, 3), w.emb, w.kernel), ContractViolation);
    CHECK_THROWS_AS(lkp_ps(random_instance(rng, 30, 8, 7), w.emb, w.kernel), EnumerationTooLarge);
    CHECK_NOTHROW(lkp_ps(random_instance(rng, 30, 7, 7), w.emb, w.kernel));
    auto bad = random_instance(rng, 30, 3, 3);
    bad.negatives[0] = bad.targets[0];
    CHECK_THROWS_AS(lkp_ps(bad, w.emb, w.kernel), ContractViolation);
}

TEST_CASE("bpr") {
    EmbeddingTable emb(1, 2, 2);
    CHECK(bpr(0, 0, 1, emb).loss == doctest::Approx(std::log(2.0)));
    emb.user(0)[0] = 1.0;
    emb.item(0)[0] = 10.0;
    CHECK(bpr(0, 0, 1, emb).loss == doctest::Approx(4.54e-5).epsilon(1e-3));
    CHECK(bpr(0, 1, 0, emb).loss == doctest::Approx(10.0 + std::log1p(std::exp(-10.0))));

    std::mt19937_64 rng(19);
    std::normal_distribution<double> d(0.0, 0.5);
    for (int trial = 0; trial < 20; ++trial) {
        EmbeddingTable e(1, 2, 5);
        for (double& x : e.user_data()) x = d(rng);
        for (double& x : e.item_data()) x = d(rng);
        const auto g = bpr(0, 0, 1, e);
        std::vector<double*> coords;
        for (double& x : e.user_data()) coords.push_back(&x);
        for (double& x : e.item_data()) coords.push_back(&x);
        std::vector<double> analytic(g.user_grad);
        for (ItemId i : {0u, 1u}) analytic.insert(analytic.end(), g.item_grad(i)->begin(), g.item_grad(i)->end());
        const auto fd = oracle::central_difference(coords, [&] { return bpr(0, 0, 1, e).loss; });
        CHECK(oracle::relative_error(analytic, fd) < 1e-6);
    }
}

TEST_CASE("bce") {
    EmbeddingTable emb(1, 1, 3);
    CHECK(bce(0, 0, 1, emb).loss == doctest::Approx(std::log(2.0)));
    CHECK(bce(0, 0, 0, emb).loss == doctest::Approx(std::log(2.0)));
    emb.user(0)[0] = 2.0;
    emb.item(0)[0] = 1.5;
    CHECK(bce(0, 0, 1, emb).loss == doctest::Approx(-oracle::log_sigmoid(3.0)));
    CHECK(bce(0, 0, 0, emb).loss == doctest::Approx(-oracle::log_sigmoid(-3.0)));
    CHECK_THROWS_AS(bce(0, 0, 2, emb), ContractViolation);

    std::mt19937_64 rng(20);
    std::normal_distribution<double> d(0.0, 0.5);
    for (int trial = 0; trial < 20; ++trial) {
        EmbeddingTable e(1, 1, 5);
        for (double& x : e.user_data()) x = d(rng);
        for (double& x : e.item_data()) x = d(rng);
        const int label = trial % 2;
        const auto g = bce(0, 0, label, e);
        std::vector<double*> coords;
        for (double& x : e.user_data()) coords.push_back(&x);
        for (double& x : e.item_data()) coords.push_back(&x);
        std::vector<double> analytic(g.user_grad);
        analytic.insert(analytic.end(), g.item_grad(0)->begin(), g.item_grad(0)->end());
        const auto fd = oracle::central_difference(coords, [&] { return bce(0, 0, label, e).loss; });
        CHECK(oracle::relative_error(analytic, fd) < 1e-6);
    }
}

TEST_CASE("losses are finite on every scheduled synthetic instance") {
    const auto data = make_synthetic(100, 300, 6, 5);
    const auto emb = init_embeddings(data.num_users, data.num_items, 16, 5);
    const auto pairs = build_diverse_training_pairs(data, 5, default_min_categories(5), 5);
    KernelTrainOptions opts;
    opts.rank = 16;
    const auto K = train_diversity_kernel(pairs, data.num_items, opts);
    const auto sched = schedule_S(data, 5, 5, 5);
    REQUIRE(!sched.instances.empty());
    for (const auto& inst : sched.instances) {
        const auto ps = lkp_ps(inst, emb, K);
        const auto nps = lkp_nps(inst, emb, K);
        CHECK(std::isfinite(ps.loss));
        CHECK(std::isfinite(nps.loss));
        CHECK(ps.all_finite());
        CHECK(nps.all_finite());
    }
}
