#include "lkp/objectives.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "lkp/error.hpp"
#include "lkp/linalg.hpp"

namespace lkp {

bool GradientBundle::all_finite() const noexcept {
    if (!std::isfinite(loss)) return false;
    for (double v : user_grad)
        if (!std::isfinite(v)) return false;
    for (const auto& ig : item_grads)
        for (double v : ig.grad)
            if (!std::isfinite(v)) return false;
    return true;
}

const std::vector<double>* GradientBundle::item_grad(ItemId item) const noexcept {
    for (const auto& ig : item_grads)
        if (ig.item == item) return &ig.grad;
    return nullptr;
}

namespace {

using Square = std::array<double, kMaxOrder * kMaxOrder>;

enum class SetObjective { positive_subset, with_exclusion, normalizer };

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Enumeration pass over all k-subsets of the ground set: log det of every
/// minor plus the probability-weighted sum of embedded minor inverses,
/// A = sum_S w_S [L_S^-1], with w_S = det(L_S) / sum_S' det(L_S').
struct SubsetSweep {
    bool singular = false;
    double log_det_first = 0.0;  // targets: positions 0..k-1
    double log_det_last = 0.0;   // all negatives when n == k
    Square weighted_inverse{};
    Square inverse_first{};
    Square inverse_last{};
};

/// Depth-first walk over subsets in lexicographic order. Each child minor is
/// its parent bordered by one row and column, so its inverse and determinant
/// follow from the parent's via the Schur complement s = c - b^T A^-1 b.
class SubsetWalker {
public:
    SubsetWalker(const PersonalizedKernel& L, double log_shift, SubsetSweep& out)
        : L_(L), m_(L.ground_size()), k_(L.k()), shift_(log_shift), out_(out) {}

    void run() {
        log_det_[0] = 0.0;
        descend(0, 0);
        if (out_.singular) return;
        const double inv_total = 1.0 / total_;
        for (std::size_t x = 0; x < m_ * m_; ++x) out_.weighted_inverse[x] *= inv_total;
    }

private:
    static constexpr std::size_t S = kMaxOrder;

    void descend(std::size_t depth, std::size_t start) {
        const double* parent = inv_[depth].data();
        double* child = inv_[depth + 1].data();
        std::array<double, S> b;
        std::array<double, S> y;
        for (std::size_t next = start; next + (k_ - depth) <= m_; ++next) {
            for (std::size_t a = 0; a < depth; ++a) b[a] = L_.matrix(idx_[a], next);
            double s = L_.matrix(next, next);
            for (std::size_t a = 0; a < depth; ++a) {
                double acc = 0.0;
                const double* row = parent + a * S;
                for (std::size_t c = 0; c < depth; ++c) acc += row[c] * b[c];
                y[a] = acc;
                s -= b[a] * acc;
            }
            if (!(s > 0.0) || !std::isfinite(s)) {
                out_.singular = true;
                return;
            }
            const double inv_s = 1.0 / s;
            for (std::size_t a = 0; a < depth; ++a) {
                const double ya = y[a] * inv_s;
                const double* prow = parent + a * S;
                double* crow = child + a * S;
                for (std::size_t c = 0; c < depth; ++c) crow[c] = prow[c] + ya * y[c];
                crow[depth] = -ya;
                child[depth * S + a] = -ya;
            }
            child[depth * S + depth] = inv_s;
            idx_[depth] = next;
            log_det_[depth + 1] = log_det_[depth] + std::log(s);

            if (depth + 1 == k_) {
                leaf(child);
            } else {
                descend(depth + 1, next + 1);
            }
            if (out_.singular) return;
        }
    }

    void leaf(const double* inv) {
        const double ld = log_det_[k_];
        const double w = std::exp(ld - shift_);
        total_ += w;
        Square& acc = out_.weighted_inverse;
        for (std::size_t a = 0; a < k_; ++a) {
            double* row = acc.data() + idx_[a] * m_;
            for (std::size_t c = 0; c < k_; ++c) row[idx_[c]] += w * inv[a * S + c];
        }
        if (leaves_ == 0) {
            out_.log_det_first = ld;
            copy_embedded(out_.inverse_first, inv);
        }
        if (leaves_ + 1 == count_) {
            out_.log_det_last = ld;
            copy_embedded(out_.inverse_last, inv);
        }
        ++leaves_;
    }

    void copy_embedded(Square& dst, const double* inv) const {
        for (std::size_t a = 0; a < k_; ++a)
            for (std::size_t c = 0; c < k_; ++c) dst[idx_[a] * m_ + idx_[c]] = inv[a * S + c];
    }

    const PersonalizedKernel& L_;
    std::size_t m_;
    std::size_t k_;
    double shift_;
    SubsetSweep& out_;
    std::array<std::array<double, S * S>, S + 1> inv_;
    std::array<double, S + 1> log_det_;
    std::array<std::size_t, S> idx_;
    double total_ = 0.0;
    std::uint64_t count_ = binomial(m_, k_);
    std::uint64_t leaves_ = 0;
};

SubsetSweep sweep_subsets(const PersonalizedKernel& L, double log_shift) {
    SubsetSweep out;
    SubsetWalker walker(L, log_shift, out);
    walker.run();
    return out;
}

/// Pulls dLoss/dL (symmetric, m x m) back to the user and item embeddings.
/// L_ij = q_i K_ij q_j + jitter, q_i = exp(clamp(<e_u, e_i>)); in gaussian
/// mode K_ij also depends on e_i and e_j.
void chain_to_embeddings(const Square& dloss_dl, const PersonalizedKernel& L, const EmbeddingTable& embeddings,
                         const DiversityKernel& kernel, GradientBundle& out) {
    const std::size_t m = L.ground_size();
    const std::size_t d = embeddings.dim();
    const GroundSetInstance& inst = *L.instance;
    const auto user = embeddings.user(inst.user);

    out.user = inst.user;
    out.user_grad.assign(d, 0.0);
    out.item_grads.resize(m);

    std::array<double, kMaxOrder> r{};
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double l0 = L.qualities[i] * L.diversity(i, j) * L.qualities[j];
            acc += dloss_dl[i * m + j] * l0;
        }
        const bool clamped = std::abs(L.scores[i]) > kQualityClamp;
        r[i] = clamped ? 0.0 : 2.0 * acc;
    }

    const bool gaussian = kernel.mode() == KernelMode::gaussian;
    const double inv_sigma2 = gaussian ? 1.0 / (kernel.sigma() * kernel.sigma()) : 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const ItemId item_id = inst.item_at(i);
        const auto item = embeddings.item(item_id);
        for (std::size_t x = 0; x < d; ++x) out.user_grad[x] += r[i] * item[x];
        auto& ig = out.item_grads[i];
        ig.item = item_id;
        ig.grad.resize(d);
        for (std::size_t x = 0; x < d; ++x) ig.grad[x] = r[i] * user[x];
        if (gaussian) {
            // dK_ij/de_i = -K_ij (e_i - e_j) / sigma^2 for i != j
            for (std::size_t j = 0; j < m; ++j) {
                if (j == i) continue;
                const double l0 = L.qualities[i] * L.diversity(i, j) * L.qualities[j];
                const double c = -2.0 * dloss_dl[i * m + j] * l0 * inv_sigma2;
                if (c == 0.0) continue;
                const auto other = embeddings.item(inst.item_at(j));
                for (std::size_t x = 0; x < d; ++x) ig.grad[x] += c * (item[x] - other[x]);
            }
        }
    }
}

GradientBundle set_objective(const GroundSetInstance& instance, const EmbeddingTable& embeddings,
                             const DiversityKernel& kernel, SetObjective kind) {
    validate_instance(instance, kind == SetObjective::with_exclusion);
    if (instance.ground_size() > kGradientEnumerationGuard) {
        throw EnumerationTooLarge("gradient enumeration is limited to k + n <= 14");
    }
    const PersonalizedKernel L = build_personalized_kernel(instance, embeddings, kernel);
    const std::size_t m = L.ground_size();

    GradientBundle out;
    out.user = instance.user;
    double log_z = 0.0;
    try {
        log_z = log_normalizer(L);
    } catch (const ConvergenceError&) {
        log_z = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(log_z)) {
        out.skipped = true;
        return out;
    }
    const SubsetSweep sweep = sweep_subsets(L, log_z);
    if (sweep.singular) {
        out.skipped = true;
        return out;
    }

    Square g{};
    switch (kind) {
        case SetObjective::normalizer:
            out.loss = log_z;
            g = sweep.weighted_inverse;
            break;
        case SetObjective::positive_subset:
            out.loss = -(sweep.log_det_first - log_z);
            for (std::size_t x = 0; x < m * m; ++x) g[x] = sweep.weighted_inverse[x] - sweep.inverse_first[x];
            break;
        case SetObjective::with_exclusion: {
            const double p_neg = std::min(std::exp(sweep.log_det_last - log_z), kMaxExclusionProbability);
            out.loss = -(sweep.log_det_first - log_z) - std::log1p(-p_neg);
            // d[-log(1-p)] = p/(1-p) * d log p, with d log p = [L_S-^-1] - A
            const double c = p_neg / (1.0 - p_neg);
            for (std::size_t x = 0; x < m * m; ++x) {
                g[x] = sweep.weighted_inverse[x] - sweep.inverse_first[x] +
                       c * (sweep.inverse_last[x] - sweep.weighted_inverse[x]);
            }
            break;
        }
    }
    chain_to_embeddings(g, L, embeddings, kernel, out);
    return out;
}

} // namespace

GradientBundle lkp_ps(const GroundSetInstance& instance, const EmbeddingTable& embeddings,
                      const DiversityKernel& kernel) {
    return set_objective(instance, embeddings, kernel, SetObjective::positive_subset);
}

GradientBundle lkp_nps(const GroundSetInstance& instance, const EmbeddingTable& embeddings,
                       const DiversityKernel& kernel) {
    return set_objective(instance, embeddings, kernel, SetObjective::with_exclusion);
}

GradientBundle log_normalizer_gradient(const GroundSetInstance& instance, const EmbeddingTable& embeddings,
                                       const DiversityKernel& kernel) {
    return set_objective(instance, embeddings, kernel, SetObjective::normalizer);
}

GradientBundle bpr(UserId user, ItemId pos_item, ItemId neg_item, const EmbeddingTable& embeddings) {
    if (pos_item == neg_item) throw ContractViolation("bpr: positive and negative item must differ");
    const auto u = embeddings.user_checked(user);
    const auto p = embeddings.item_checked(pos_item);
    const auto q = embeddings.item_checked(neg_item);
    const double x = dot(u, p) - dot(u, q);
    GradientBundle out;
    out.user = user;
    out.loss = softplus(-x);
    const double g = -sigmoid(-x);  // dloss/dx
    const std::size_t d = u.size();
    out.user_grad.resize(d);
    ItemGradient gp{pos_item, std::vector<double>(d)};
    ItemGradient gq{neg_item, std::vector<double>(d)};
    for (std::size_t k = 0; k < d; ++k) {
        out.user_grad[k] = g * (p[k] - q[k]);
        gp.grad[k] = g * u[k];
        gq.grad[k] = -g * u[k];
    }
    out.item_grads.push_back(std::move(gp));
    out.item_grads.push_back(std::move(gq));
    return out;
}

GradientBundle bce(UserId user, ItemId item, int label, const EmbeddingTable& embeddings) {
    if (label != 0 && label != 1) throw ContractViolation("bce: label must be 0 or 1");
    const auto u = embeddings.user_checked(user);
    const auto v = embeddings.item_checked(item);
    const double y = dot(u, v);
    GradientBundle out;
    out.user = user;
    out.loss = label == 1 ? softplus(-y) : softplus(y);
    const double g = sigmoid(y) - label;
    const std::size_t d = u.size();
    out.user_grad.resize(d);
    ItemGradient gi{item, std::vector<double>(d)};
    for (std::size_t k = 0; k < d; ++k) {
        out.user_grad[k] = g * v[k];
        gi.grad[k] = g * u[k];
    }
    out.item_grads.push_back(std::move(gi));
    return out;
}

} // namespace lkp
