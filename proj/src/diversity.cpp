#include "lkp/diversity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "lkp/binary_io.hpp"
#include "lkp/error.hpp"
#include "lkp/linalg.hpp"
#include "lkp/log.hpp"
#include "lkp/rng.hpp"

namespace lkp {

DiversityKernel DiversityKernel::pretrained(std::size_t num_items, std::size_t rank, std::vector<double> factors,
                                            bool frozen) {
    if (rank == 0 || factors.size() != num_items * rank) {
        throw ContractViolation("DiversityKernel::pretrained: factor buffer must be num_items x rank");
    }
    DiversityKernel k;
    k.mode_ = KernelMode::pretrained;
    k.frozen_ = frozen;
    k.num_items_ = num_items;
    k.rank_ = rank;
    k.v_ = std::move(factors);
    return k;
}

DiversityKernel DiversityKernel::identity(std::size_t num_items) {
    std::vector<double> v(num_items * num_items, 0.0);
    for (std::size_t i = 0; i < num_items; ++i) v[i * num_items + i] = 1.0;
    return pretrained(num_items, num_items, std::move(v));
}

DiversityKernel DiversityKernel::gaussian(double sigma) {
    DiversityKernel k;
    k.mode_ = KernelMode::gaussian;
    k.frozen_ = false;
    k.set_sigma(sigma);
    return k;
}

void DiversityKernel::set_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ContractViolation("gaussian kernel sigma must be positive");
    sigma_ = sigma;
}

double DiversityKernel::entry(ItemId i, ItemId j, const EmbeddingTable& embeddings) const {
    if (mode_ == KernelMode::gaussian) {
        if (i == j) {
            embeddings.item_checked(i);
            return 1.0;
        }
        return gaussian_entry(embeddings.item_checked(i), embeddings.item_checked(j), sigma_);
    }
    if (i >= num_items_) throw LookupError("unknown item id " + std::to_string(i) + " in diversity kernel");
    if (j >= num_items_) throw LookupError("unknown item id " + std::to_string(j) + " in diversity kernel");
    const auto a = factor(i);
    const auto b = factor(j);
    double s = 0.0;
    for (std::size_t r = 0; r < rank_; ++r) s += a[r] * b[r];
    return s;
}

double gaussian_entry(std::span<const double> a, std::span<const double> b, double sigma) {
    if (a.size() != b.size()) throw ContractViolation("gaussian_entry: dimension mismatch");
    if (!(sigma > 0.0)) throw ContractViolation("gaussian_entry: sigma must be positive");
    double d2 = 0.0;
    for (std::size_t r = 0; r < a.size(); ++r) {
        const double d = a[r] - b[r];
        d2 += d * d;
    }
    return std::exp(-d2 / (2.0 * sigma * sigma));
}

double median_pairwise_distance(const EmbeddingTable& embeddings, std::size_t sample_pairs, std::uint64_t seed) {
    const std::size_t n = embeddings.num_items();
    if (n < 2 || sample_pairs == 0) return 1.0;
    Rng rng = make_rng(seed, stream::kSigma);
    std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(n - 1));
    std::vector<double> dist;
    dist.reserve(sample_pairs);
    while (dist.size() < sample_pairs) {
        const ItemId a = pick(rng);
        const ItemId b = pick(rng);
        if (a == b) continue;
        double d2 = 0.0;
        const auto va = embeddings.item(a);
        const auto vb = embeddings.item(b);
        for (std::size_t r = 0; r < va.size(); ++r) d2 += (va[r] - vb[r]) * (va[r] - vb[r]);
        dist.push_back(std::sqrt(d2));
    }
    auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    const double med = *mid;
    return med > 0.0 ? med : 1.0;
}

DiversePairSet build_diverse_training_pairs(const InteractionDataset& data, std::size_t set_size,
                                            std::size_t min_categories, std::uint64_t seed) {
    if (set_size < 2) throw ContractViolation("diverse pairs need set_size >= 2");
    if (min_categories > set_size) throw ContractViolation("min_categories cannot exceed set_size");
    if (data.num_items < 2 * set_size) throw ContractViolation("catalog too small for diverse pairs");

    DiversePairSet out;
    out.set_size = set_size;
    const auto histories = train_lists(data);
    const auto observed = sorted_lists(histories);
    std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(data.num_items - 1));

    for (std::size_t u = 0; u < data.num_users; ++u) {
        const auto& h = histories[u];
        if (h.size() < set_size) continue;
        if (data.num_items - observed[u].size() < set_size) continue;
        Rng rng = make_rng(seed, stream::kDiversePairs, u);
        for (std::size_t start = 0; start + set_size <= h.size(); ++start) {
            std::array<CategoryId, kMaxOrder> cats{};
            std::size_t distinct = 0;
            for (std::size_t t = 0; t < set_size; ++t) {
                const CategoryId c = data.categories[h[start + t]];
                if (std::find(cats.begin(), cats.begin() + static_cast<std::ptrdiff_t>(distinct), c) ==
                    cats.begin() + static_cast<std::ptrdiff_t>(distinct)) {
                    cats[distinct++] = c;
                }
            }
            if (distinct < min_categories) continue;
            DiversePair pair;
            pair.plus.assign(h.begin() + static_cast<std::ptrdiff_t>(start),
                             h.begin() + static_cast<std::ptrdiff_t>(start + set_size));
            while (pair.minus.size() < set_size) {
                const ItemId cand = pick(rng);
                if (contains_sorted(observed[u], cand)) continue;
                if (std::find(pair.minus.begin(), pair.minus.end(), cand) != pair.minus.end()) continue;
                pair.minus.push_back(cand);
            }
            out.pairs.push_back(std::move(pair));
        }
    }
    if (out.pairs.empty()) {
        log_warning("build_diverse_training_pairs: no window of size " + std::to_string(set_size) + " spans " +
                    std::to_string(min_categories) + " categories; the kernel will stay at its initialization");
    }
    return out;
}

double log_det_gram(const DiversityKernel& kernel, std::span<const ItemId> items, double jitter,
                    std::vector<double>* grad) {
    const std::size_t s = items.size();
    if (s == 0) return 0.0;
    if (s > kMaxOrder) throw ContractViolation("log_det_gram: set larger than 16");
    const std::size_t r = kernel.rank();
    for (ItemId i : items)
        if (i >= kernel.num_items()) throw LookupError("unknown item id " + std::to_string(i) + " in diversity kernel");

    std::array<double, kMaxOrder * kMaxOrder> gram;
    for (std::size_t a = 0; a < s; ++a) {
        const auto va = kernel.factor(items[a]);
        for (std::size_t b = a; b < s; ++b) {
            const auto vb = kernel.factor(items[b]);
            double d = 0.0;
            for (std::size_t x = 0; x < r; ++x) d += va[x] * vb[x];
            gram[a * s + b] = d;
            gram[b * s + a] = d;
        }
        gram[a * s + a] += jitter;
    }
    SmallLu lu({gram.data(), s * s}, s);
    if (lu.sign() <= 0) return -std::numeric_limits<double>::infinity();
    if (grad != nullptr) {
        // d log det(V_T V_T^T) / dV_a = 2 sum_b (K_T^-1)_ab V_b
        std::array<double, kMaxOrder * kMaxOrder> inv;
        lu.inverse({inv.data(), s * s});
        grad->assign(s * r, 0.0);
        for (std::size_t a = 0; a < s; ++a) {
            double* ga = grad->data() + a * r;
            for (std::size_t b = 0; b < s; ++b) {
                const double w = 2.0 * inv[a * s + b];
                const auto vb = kernel.factor(items[b]);
                for (std::size_t x = 0; x < r; ++x) ga[x] += w * vb[x];
            }
        }
    }
    return lu.log_abs_det();
}

double diversity_objective(const DiversePairSet& pairs, const DiversityKernel& kernel, double jitter) {
    double total = 0.0;
    for (const auto& p : pairs.pairs) {
        total += log_det_gram(kernel, p.plus, jitter) - log_det_gram(kernel, p.minus, jitter);
    }
    return total;
}

DiversityKernel train_diversity_kernel(const DiversePairSet& pairs, std::size_t num_items,
                                       const KernelTrainOptions& options,
                                       const std::function<void(std::size_t, double)>& on_epoch) {
    const std::size_t r = options.rank;
    if (r < pairs.set_size) {
        throw ContractViolation("kernel rank " + std::to_string(r) + " is below the set size " +
                                std::to_string(pairs.set_size) + "; size-|T| minors would be singular");
    }
    if (num_items == 0) throw ContractViolation("train_diversity_kernel: empty catalog");

    std::vector<double> v(num_items * r);
    {
        Rng rng = make_rng(options.seed, stream::kKernelInit);
        const double bound = 0.5 / std::sqrt(static_cast<double>(r));
        std::uniform_real_distribution<double> init(-bound, bound);
        for (double& x : v) x = init(rng);
    }
    auto normalize = [](std::span<double> row) {
        double norm = 0.0;
        for (double x : row) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (double& x : row) x /= norm;
    };
    if (options.unit_rows)
        for (std::size_t i = 0; i < num_items; ++i) normalize({v.data() + i * r, r});
    DiversityKernel kernel = DiversityKernel::pretrained(num_items, r, std::move(v), false);

    auto check_finite = [&](double value, std::size_t epoch, std::size_t pair_index) {
        if (!std::isfinite(value)) {
            std::ostringstream os;
            os << "diversity kernel objective became non-finite at epoch " << epoch << ", pair " << pair_index;
            throw NumericalError(os.str());
        }
    };

    if (on_epoch) on_epoch(0, diversity_objective(pairs, kernel, options.jitter));

    std::vector<std::size_t> order(pairs.pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad;
    for (std::size_t epoch = 1; epoch <= options.epochs && !pairs.pairs.empty(); ++epoch) {
        Rng rng = make_rng(options.seed, stream::kKernelShuffle, epoch);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t idx : order) {
            const auto& p = pairs.pairs[idx];
            // Ascend on the observed diverse set, descend on the negative set.
            for (int sign : {+1, -1}) {
                const auto& items = sign > 0 ? p.plus : p.minus;
                const double value = log_det_gram(kernel, items, options.jitter, &grad);
                check_finite(value, epoch, idx);
                for (std::size_t a = 0; a < items.size(); ++a) {
                    auto row = kernel.factor(items[a]);
                    for (std::size_t x = 0; x < r; ++x) row[x] += sign * options.learning_rate * grad[a * r + x];
                    if (options.unit_rows) normalize(row);
                }
            }
        }
        const double obj = diversity_objective(pairs, kernel, options.jitter);
        check_finite(obj, epoch, pairs.pairs.size());
        if (on_epoch) on_epoch(epoch, obj);
    }
    kernel.set_frozen(true);
    return kernel;
}

void save_kernel(const DiversityKernel& kernel, const std::filesystem::path& path) {
    if (kernel.mode() != KernelMode::pretrained) {
        throw ContractViolation("only pretrained kernels have a checkpoint format");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << "lkp-divkernel v1 " << kernel.num_items() << ' ' << kernel.rank() << '\n';
    detail::write_f64_le(out, kernel.factors());
    if (!out) throw DataError("write failed: " + path.string());
}

DiversityKernel load_kernel(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open kernel checkpoint " + path.string());
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic, version;
    std::size_t items = 0, rank = 0;
    if (!(hs >> magic >> version >> items >> rank) || magic != "lkp-divkernel" || version != "v1" || rank == 0) {
        throw DataError("bad kernel checkpoint header in " + path.string());
    }
    std::vector<double> v(items * rank);
    detail::read_f64_le(in, v);
    return DiversityKernel::pretrained(items, rank, std::move(v), true);
}

} // namespace lkp
