#include "lkp/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "lkp/diversity.hpp"
#include "lkp/dpp.hpp"
#include "lkp/embedding.hpp"
#include "lkp/linalg.hpp"
#include "lkp/objectives.hpp"
#include "lkp/rng.hpp"

namespace lkp {

bool VerifyReport::passed() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

nlohmann::json VerifyReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) {
        arr.push_back({{"name", c.name},
                       {"cases", c.cases},
                       {"max_error", c.max_error},
                       {"tolerance", c.tolerance},
                       {"passed", c.passed},
                       {"seconds", c.seconds}});
    }
    return {{"passed", passed()}, {"checks", arr}};
}

double gradient_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double scale = 1e-8;
    for (double x : numeric) scale = std::max(scale, std::abs(x));
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) worst = std::max(worst, std::abs(analytic[i] - numeric[i]));
    return worst / scale;
}

namespace {

constexpr double kFdStep = 1e-5;

struct Fixture {
    EmbeddingTable emb;
    DiversityKernel kernel;
};

// Small random world: embeddings with enough spread for non-trivial
// probabilities and a full-rank random low-rank kernel.
Fixture make_fixture(std::size_t users, std::size_t items, std::size_t dim, std::size_t rank, Rng& rng) {
    std::normal_distribution<double> emb_dist(0.0, 0.3);
    EmbeddingTable emb(users, items, dim);
    for (double& x : emb.user_data()) x = emb_dist(rng);
    for (double& x : emb.item_data()) x = emb_dist(rng);
    std::normal_distribution<double> v_dist(0.0, 1.0 / std::sqrt(static_cast<double>(rank)));
    std::vector<double> v(items * rank);
    for (double& x : v) x = v_dist(rng);
    return {std::move(emb), DiversityKernel::pretrained(items, rank, std::move(v))};
}

GroundSetInstance random_instance(std::size_t num_users, std::size_t num_items, std::size_t k, std::size_t n,
                                  Rng& rng) {
    std::vector<ItemId> pool(num_items);
    for (std::size_t i = 0; i < num_items; ++i) pool[i] = static_cast<ItemId>(i);
    std::shuffle(pool.begin(), pool.end(), rng);
    GroundSetInstance inst;
    inst.user = static_cast<UserId>(std::uniform_int_distribution<std::size_t>(0, num_users - 1)(rng));
    inst.targets.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    inst.negatives.assign(pool.begin() + static_cast<std::ptrdiff_t>(k),
                          pool.begin() + static_cast<std::ptrdiff_t>(k + n));
    return inst;
}

SymMatrix random_psd(std::size_t m, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    const std::size_t cols = m + 2;
    std::vector<double> b(m * cols);
    for (double& x : b) x = dist(rng);
    SymMatrix out(m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i; j < m; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < cols; ++c) s += b[i * cols + c] * b[j * cols + c];
            out.set(i, j, s / static_cast<double>(cols));
        }
    return out;
}

template <class Body>
CheckResult timed(std::string name, double tolerance, Body&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    r.name = std::move(name);
    r.tolerance = tolerance;
    body(r);
    r.passed = std::isfinite(r.max_error) && r.max_error < tolerance;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

CheckResult check_esp(Rng& rng) {
    return timed("esp_vs_enumeration", 1e-8, [&](CheckResult& r) {
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t m = std::uniform_int_distribution<std::size_t>(4, 12)(rng);
            const std::size_t k = std::uniform_int_distribution<std::size_t>(1, m - 1)(rng);
            const SymMatrix l = random_psd(m, rng);
            const double fast = esp(k, eigenvalues_sym(l));
            double slow = 0.0;
            for (const auto& s : enumerate_k_subsets(m, k)) slow += det_principal_submatrix(l, s);
            r.max_error = std::max(r.max_error, std::abs(fast - slow) / std::abs(slow));
            ++r.cases;
        }
    });
}

CheckResult check_normalization(Rng& rng) {
    return timed("kdpp_normalization", 1e-8, [&](CheckResult& r) {
        const auto subsets = enumerate_k_subsets(10, 5);
        for (int trial = 0; trial < 100; ++trial) {
            Fixture fx = make_fixture(4, 40, 8, 16, rng);
            const auto inst = random_instance(4, 40, 5, 5, rng);
            const auto pk = build_personalized_kernel(inst, fx.emb, fx.kernel);
            const double log_z = log_normalizer(pk);
            double total = 0.0;
            for (const auto& s : subsets) total += std::exp(kdpp_log_probability(pk, s, log_z));
            r.max_error = std::max(r.max_error, std::abs(total - 1.0));
            ++r.cases;
        }
        // Identity diversity and zero scores: every subset equally likely.
        EmbeddingTable flat(1, 10, 4);
        const auto id = DiversityKernel::identity(10);
        GroundSetInstance inst{0, {0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}};
        const auto pk = build_personalized_kernel(inst, flat, id);
        for (const auto& s : subsets) {
            r.max_error = std::max(r.max_error, std::abs(std::exp(kdpp_log_probability(pk, s)) - 1.0 / 252.0));
        }
        ++r.cases;
    });
}

// Central differences of `loss` over every coordinate of the user row and the
// listed item rows; compares against the bundle's gradients.
double embedding_fd_error(EmbeddingTable& emb, UserId user, const std::vector<ItemId>& items,
                          const GradientBundle& analytic, const std::function<double()>& loss) {
    std::vector<double> a, f;
    auto probe = [&](std::span<double> row, const std::vector<double>* grad) {
        for (std::size_t x = 0; x < row.size(); ++x) {
            const double saved = row[x];
            row[x] = saved + kFdStep;
            const double up = loss();
            row[x] = saved - kFdStep;
            const double down = loss();
            row[x] = saved;
            f.push_back((up - down) / (2.0 * kFdStep));
            a.push_back(grad ? (*grad)[x] : 0.0);
        }
    };
    probe(emb.user(user), &analytic.user_grad);
    for (ItemId i : items) probe(emb.item(i), analytic.item_grad(i));
    return gradient_relative_error(a, f);
}

CheckResult check_set_objective(Rng& rng, const std::string& name, bool nps, bool gaussian) {
    return timed(name, 1e-4, [&](CheckResult& r) {
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t k = nps ? std::uniform_int_distribution<std::size_t>(2, 5)(rng)
                                      : std::uniform_int_distribution<std::size_t>(2, 6)(rng);
            const std::size_t n = nps ? k : std::uniform_int_distribution<std::size_t>(1, 6)(rng);
            Fixture fx = make_fixture(3, 30, 6, 16, rng);
            DiversityKernel kernel = gaussian ? DiversityKernel::gaussian(0.6) : fx.kernel;
            const auto inst = random_instance(3, 30, k, n, rng);
            auto eval = [&] { return nps ? lkp_nps(inst, fx.emb, kernel) : lkp_ps(inst, fx.emb, kernel); };
            const GradientBundle g = eval();
            const double err =
                embedding_fd_error(fx.emb, inst.user, inst.ground_items(), g, [&] { return eval().loss; });
            r.max_error = std::max(r.max_error, err);
            ++r.cases;
        }
    });
}

CheckResult check_pointwise(Rng& rng, bool pairwise) {
    return timed(pairwise ? "gradient_bpr" : "gradient_bce", 1e-4, [&](CheckResult& r) {
        for (int trial = 0; trial < 20; ++trial) {
            Fixture fx = make_fixture(3, 10, 8, 4, rng);
            const auto inst = random_instance(3, 10, 2, 1, rng);
            const ItemId a = inst.targets[0];
            const ItemId b = inst.targets[1];
            const int label = trial % 2;
            auto eval = [&] { return pairwise ? bpr(inst.user, a, b, fx.emb) : bce(inst.user, a, label, fx.emb); };
            const GradientBundle g = eval();
            std::vector<ItemId> items{a};
            if (pairwise) items.push_back(b);
            const double err = embedding_fd_error(fx.emb, inst.user, items, g, [&] { return eval().loss; });
            r.max_error = std::max(r.max_error, err);
            ++r.cases;
        }
    });
}

CheckResult check_kernel_objective(Rng& rng) {
    return timed("gradient_kernel_logdet", 1e-4, [&](CheckResult& r) {
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t rank = 8;
            Fixture fx = make_fixture(1, 20, 2, rank, rng);
            const std::size_t size = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
            const auto inst = random_instance(1, 20, size, 1, rng);
            const auto& items = inst.targets;
            std::vector<double> grad;
            log_det_gram(fx.kernel, items, kKernelJitter, &grad);
            std::vector<double> numeric;
            for (std::size_t a = 0; a < items.size(); ++a) {
                auto row = fx.kernel.factor(items[a]);
                for (std::size_t x = 0; x < rank; ++x) {
                    const double saved = row[x];
                    row[x] = saved + kFdStep;
                    const double up = log_det_gram(fx.kernel, items, kKernelJitter);
                    row[x] = saved - kFdStep;
                    const double down = log_det_gram(fx.kernel, items, kKernelJitter);
                    row[x] = saved;
                    numeric.push_back((up - down) / (2.0 * kFdStep));
                }
            }
            r.max_error = std::max(r.max_error, gradient_relative_error(grad, numeric));
            ++r.cases;
        }
    });
}

CheckResult check_logdet_split(Rng& rng) {
    return timed("logdet_quality_diversity_split", 1e-6, [&](CheckResult& r) {
        for (int trial = 0; trial < 100; ++trial) {
            Fixture fx = make_fixture(2, 30, 6, 16, rng);
            const auto inst = random_instance(2, 30, 5, 5, rng);
            const auto pk = build_personalized_kernel(inst, fx.emb, fx.kernel, 0.0);
            const std::size_t size = std::uniform_int_distribution<std::size_t>(1, 10)(rng);
            std::vector<std::size_t> pos(10);
            for (std::size_t p = 0; p < 10; ++p) pos[p] = p;
            std::shuffle(pos.begin(), pos.end(), rng);
            pos.resize(size);
            std::sort(pos.begin(), pos.end());
            const double lhs = std::log(det_principal_submatrix(pk.matrix, pos));
            double rhs = std::log(det_principal_submatrix(pk.diversity, pos));
            for (std::size_t p : pos) {
                rhs += 2.0 * dot(fx.emb.user(inst.user), fx.emb.item(inst.item_at(p)));
            }
            r.max_error = std::max(r.max_error, std::abs(lhs - rhs));
            ++r.cases;
        }
    });
}

} // namespace

VerifyReport run_verify(std::uint64_t seed) {
    const std::vector<std::function<CheckResult(Rng&)>> checks = {
        check_esp,
        check_normalization,
        [](Rng& g) { return check_set_objective(g, "gradient_lkp_ps_pretrained", false, false); },
        [](Rng& g) { return check_set_objective(g, "gradient_lkp_ps_gaussian", false, true); },
        [](Rng& g) { return check_set_objective(g, "gradient_lkp_nps_pretrained", true, false); },
        [](Rng& g) { return check_set_objective(g, "gradient_lkp_nps_gaussian", true, true); },
        [](Rng& g) { return check_pointwise(g, true); },
        [](Rng& g) { return check_pointwise(g, false); },
        check_kernel_objective,
        check_logdet_split,
    };
    VerifyReport report;
    for (std::size_t c = 0; c < checks.size(); ++c) {
        Rng g = make_rng(seed, 0x7e51f1ULL, c);
        report.checks.push_back(checks[c](g));
    }
    return report;
}

} // namespace lkp
