#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lkp/diversity.hpp"
#include "lkp/dpp.hpp"
#include "lkp/embedding.hpp"

namespace lkp {

struct ItemGradient {
    ItemId item = 0;
    std::vector<double> grad;
};

/// Loss (to minimize) of one training unit and its gradient with respect to
/// the touched embedding rows. `skipped` marks an instance whose kernel had a
/// singular k-minor; such bundles carry zero loss and no gradients.
struct GradientBundle {
    UserId user = 0;
    double loss = 0.0;
    std::vector<double> user_grad;
    std::vector<ItemGradient> item_grads;
    bool skipped = false;

    bool all_finite() const noexcept;
    /// nullptr when the item is not part of the bundle.
    const std::vector<double>* item_grad(ItemId item) const noexcept;
};

/// Gradient enumeration visits all C(k+n, k) subsets; refuse beyond this ground size.
inline constexpr std::size_t kGradientEnumerationGuard = 14;
inline constexpr double kMaxExclusionProbability = 1.0 - 1e-12;

/// -log P_k(targets) under the instance's k-DPP.
GradientBundle lkp_ps(const GroundSetInstance& instance, const EmbeddingTable& embeddings,
                      const DiversityKernel& kernel);

/// -[log P_k(targets) + log(1 - P_k(negatives))]; requires n == k.
GradientBundle lkp_nps(const GroundSetInstance& instance, const EmbeddingTable& embeddings,
                       const DiversityKernel& kernel);

/// log Z_k of the instance kernel (as `loss`) with its enumeration gradient
/// sum_S w_S d log det(L_S). Exposed for cross-checking against the
/// eigenvalue route.
GradientBundle log_normalizer_gradient(const GroundSetInstance& instance, const EmbeddingTable& embeddings,
                                       const DiversityKernel& kernel);

/// -log sigmoid(<u, pos> - <u, neg>).
GradientBundle bpr(UserId user, ItemId pos_item, ItemId neg_item, const EmbeddingTable& embeddings);

/// Binary cross-entropy on sigmoid(<u, item>).
GradientBundle bce(UserId user, ItemId item, int label, const EmbeddingTable& embeddings);

} // namespace lkp
