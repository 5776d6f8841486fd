#include "lkp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "lkp/error.hpp"
#include "lkp/eval.hpp"
#include "lkp/log.hpp"
#include "lkp/objectives.hpp"
#include "lkp/optim.hpp"
#include "lkp/parallel.hpp"
#include "lkp/rng.hpp"

namespace lkp {

std::string_view to_string(Objective o) {
    switch (o) {
        case Objective::lkp_ps: return "lkp_ps";
        case Objective::lkp_nps: return "lkp_nps";
        case Objective::bpr: return "bpr";
        case Objective::bce: return "bce";
    }
    return "?";
}

std::string_view to_string(SamplerMode s) { return s == SamplerMode::R ? "R" : "S"; }
std::string_view to_string(KernelMode m) { return m == KernelMode::pretrained ? "pretrained" : "gaussian"; }

Objective parse_objective(std::string_view s) {
    if (s == "lkp_ps") return Objective::lkp_ps;
    if (s == "lkp_nps") return Objective::lkp_nps;
    if (s == "bpr") return Objective::bpr;
    if (s == "bce") return Objective::bce;
    throw ContractViolation("unknown objective '" + std::string(s) + "' (expected lkp_ps, lkp_nps, bpr, bce)");
}

SamplerMode parse_sampler(std::string_view s) {
    if (s == "R" || s == "r") return SamplerMode::R;
    if (s == "S" || s == "s") return SamplerMode::S;
    throw ContractViolation("unknown sampler '" + std::string(s) + "' (expected R or S)");
}

KernelMode parse_kernel_mode(std::string_view s) {
    if (s == "pretrained") return KernelMode::pretrained;
    if (s == "gaussian") return KernelMode::gaussian;
    throw ContractViolation("unknown kernel mode '" + std::string(s) + "' (expected pretrained or gaussian)");
}

void TrainConfig::validate() const {
    const bool set_level = objective == Objective::lkp_ps || objective == Objective::lkp_nps;
    if (set_level) {
        if (k < 2) throw ContractViolation("k must be >= 2");
        if (n < 1) throw ContractViolation("n must be >= 1");
        if (k + n > kGradientEnumerationGuard) throw ContractViolation("k + n must not exceed 14");
    }
    if (objective == Objective::lkp_nps && n != k) {
        throw ContractViolation("lkp_nps requires n == k (got k = " + std::to_string(k) + ", n = " +
                                std::to_string(n) + ")");
    }
    if (dim == 0) throw ContractViolation("embedding dimension must be positive");
    if (!(learning_rate > 0.0)) throw ContractViolation("learning rate must be positive");
    if (l2 < 0.0) throw ContractViolation("l2 must be non-negative");
    if (batch_size == 0) throw ContractViolation("batch size must be positive");
    if (eval_interval == 0) throw ContractViolation("eval interval must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0)) {
        throw ContractViolation("Adam betas must be in [0, 1) and eps positive");
    }
}

TrainConfig variant_config(std::string_view name) {
    TrainConfig c;
    c.kernel_mode = KernelMode::pretrained;
    if (name == "PR") {
        c.objective = Objective::lkp_ps;
        c.sampler = SamplerMode::R;
    } else if (name == "PS") {
        c.objective = Objective::lkp_ps;
        c.sampler = SamplerMode::S;
    } else if (name == "NPR") {
        c.objective = Objective::lkp_nps;
        c.sampler = SamplerMode::R;
    } else if (name == "NPS") {
        c.objective = Objective::lkp_nps;
        c.sampler = SamplerMode::S;
    } else if (name == "PSE") {
        c.objective = Objective::lkp_ps;
        c.sampler = SamplerMode::S;
        c.kernel_mode = KernelMode::gaussian;
    } else if (name == "NPSE") {
        c.objective = Objective::lkp_nps;
        c.sampler = SamplerMode::S;
        c.kernel_mode = KernelMode::gaussian;
    } else {
        throw ContractViolation("unknown variant '" + std::string(name) + "'");
    }
    return c;
}

std::string variant_name(const TrainConfig& c) {
    if (c.objective == Objective::bpr) return "BPR";
    if (c.objective == Objective::bce) return "BCE";
    std::string name = c.objective == Objective::lkp_nps ? "NP" : "P";
    name += c.sampler == SamplerMode::S ? "S" : "R";
    if (c.kernel_mode == KernelMode::gaussian) name += "E";
    return name;
}

nlohmann::json EpochRecord::to_json() const {
    nlohmann::json j;
    j["epoch"] = epoch;
    j["loss"] = std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(nullptr);
    j["val_ndcg5"] = val_ndcg5 ? nlohmann::json(*val_ndcg5) : nlohmann::json(nullptr);
    j["wall_ms"] = wall_ms;
    return j;
}

void write_train_log(const std::vector<EpochRecord>& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    for (const auto& r : log) out << r.to_json().dump() << '\n';
}

namespace {

/// Sparse per-row gradient buffer; rows are reported in first-touch order.
class RowAccumulator {
public:
    RowAccumulator(std::size_t rows, std::size_t dim) : dim_(dim), data_(rows * dim, 0.0), touched_(rows, 0) {}

    void add(std::size_t row, std::span<const double> g) {
        if (!touched_[row]) {
            touched_[row] = 1;
            order_.push_back(row);
        }
        double* dst = data_.data() + row * dim_;
        for (std::size_t x = 0; x < dim_; ++x) dst[x] += g[x];
    }

    const std::vector<std::size_t>& rows() const noexcept { return order_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * dim_, dim_}; }

    bool all_finite() const {
        for (std::size_t r : order_)
            for (std::size_t x = 0; x < dim_; ++x)
                if (!std::isfinite(data_[r * dim_ + x])) return false;
        return true;
    }

    void clear() {
        for (std::size_t r : order_) {
            touched_[r] = 0;
            std::fill_n(data_.begin() + static_cast<std::ptrdiff_t>(r * dim_), dim_, 0.0);
        }
        order_.clear();
    }

private:
    std::size_t dim_;
    std::vector<double> data_;
    std::vector<std::uint8_t> touched_;
    std::vector<std::size_t> order_;
};

struct PointUnit {
    UserId user;
    ItemId item;
    ItemId other;  // BPR negative
    int label;     // BCE label
};

std::vector<PointUnit> baseline_units(const TrainConfig& cfg, const InteractionDataset& data, std::size_t epoch) {
    const auto histories = train_lists(data);
    const auto observed = sorted_lists(histories);
    std::vector<PointUnit> units;
    for (std::size_t u = 0; u < data.num_users; ++u) {
        if (histories[u].empty() || observed[u].size() >= data.num_items) continue;
        Rng rng = make_rng(cfg.seed, stream::kBaselineNegatives, epoch * data.num_users + u);
        for (ItemId i : histories[u]) {
            const ItemId neg = sample_negatives(observed[u], data.num_items, 1, rng).front();
            const auto uid = static_cast<UserId>(u);
            if (cfg.objective == Objective::bpr) {
                units.push_back({uid, i, neg, 1});
            } else {
                units.push_back({uid, i, 0, 1});
                units.push_back({uid, neg, 0, 0});
            }
        }
    }
    return units;
}

double validation_ndcg5(const EmbeddingTable& model, const InteractionDataset& data, std::size_t threads) {
    static constexpr std::size_t kFive[] = {5};
    return evaluate(model, data, EvalSplit::validation, kFive, threads).at(5).ndcg;
}

} // namespace

TrainResult train(const TrainConfig& cfg, const InteractionDataset& data, const DiversityKernel& kernel,
                  const TrainHooks& hooks) {
    cfg.validate();
    if (!data.has_splits()) throw ContractViolation("train: dataset must be split first");
    const bool set_level = cfg.objective == Objective::lkp_ps || cfg.objective == Objective::lkp_nps;
    if (set_level && cfg.kernel_mode == KernelMode::pretrained) {
        if (kernel.mode() != KernelMode::pretrained || !kernel.frozen()) {
            throw ContractViolation("pretrained kernel mode needs a frozen pretrained diversity kernel");
        }
        if (kernel.num_items() != data.num_items) {
            throw ContractViolation("diversity kernel covers " + std::to_string(kernel.num_items()) +
                                    " items but the dataset has " + std::to_string(data.num_items));
        }
    }

    TrainResult result;
    EmbeddingTable model = init_embeddings(data.num_users, data.num_items, cfg.dim, cfg.seed);
    const bool gaussian = set_level && cfg.kernel_mode == KernelMode::gaussian;
    DiversityKernel active = gaussian ? DiversityKernel::gaussian(1.0) : kernel;
    auto refresh_sigma = [&](std::size_t epoch) {
        if (gaussian) active.set_sigma(median_pairwise_distance(model, kSigmaSamplePairs, derive_seed(cfg.seed, stream::kSigma, epoch)));
    };
    refresh_sigma(0);

    const AdamHyper hyper{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.l2};
    const std::size_t d = cfg.dim;
    std::vector<double> um(model.user_data().size(), 0.0), uv(um.size(), 0.0);
    std::vector<double> im(model.item_data().size(), 0.0), iv(im.size(), 0.0);
    RowAccumulator ugrad(data.num_users, d), igrad(data.num_items, d);
    std::uint64_t step = 0;

    const double val0 = validation_ndcg5(model, data, cfg.threads);
    result.log.push_back({0, std::numeric_limits<double>::quiet_NaN(), val0, 0.0});
    result.best_epoch = 0;
    result.best_val_ndcg5 = val0;
    EmbeddingTable best = model;
    if (hooks.on_epoch) hooks.on_epoch(0, model, active);

    std::size_t stale_intervals = 0;
    std::size_t non_finite_epochs = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        refresh_sigma(epoch);

        std::vector<GroundSetInstance> instances;
        std::vector<PointUnit> points;
        if (set_level) {
            instances = make_schedule(cfg.sampler, data, cfg.k, cfg.n, derive_seed(cfg.seed, stream::kSchedule, epoch))
                            .instances;
        } else {
            points = baseline_units(cfg, data, epoch);
        }
        const std::size_t count = set_level ? instances.size() : points.size();
        std::vector<std::size_t> order(count);
        std::iota(order.begin(), order.end(), 0);
        {
            Rng rng = make_rng(cfg.seed, stream::kSchedule, (std::uint64_t{1} << 32) + epoch);
            std::shuffle(order.begin(), order.end(), rng);
        }

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        std::vector<GradientBundle> bundles(cfg.batch_size);
        for (std::size_t start = 0; start < count; start += cfg.batch_size) {
            const std::size_t batch = std::min(cfg.batch_size, count - start);
            parallel_for(batch, cfg.threads, [&](std::size_t b) {
                const std::size_t idx = order[start + b];
                switch (cfg.objective) {
                    case Objective::lkp_ps: bundles[b] = lkp_ps(instances[idx], model, active); break;
                    case Objective::lkp_nps: bundles[b] = lkp_nps(instances[idx], model, active); break;
                    case Objective::bpr: {
                        const auto& p = points[idx];
                        bundles[b] = bpr(p.user, p.item, p.other, model);
                        break;
                    }
                    case Objective::bce: {
                        const auto& p = points[idx];
                        bundles[b] = bce(p.user, p.item, p.label, model);
                        break;
                    }
                }
            });

            std::size_t used = 0;
            for (std::size_t b = 0; b < batch; ++b) {
                const auto& g = bundles[b];
                if (g.skipped) {
                    ++result.skipped_instances;
                    continue;
                }
                ++used;
                loss_sum += g.loss;
                ++loss_count;
                ugrad.add(g.user, g.user_grad);
                for (const auto& ig : g.item_grads) igrad.add(ig.item, ig.grad);
            }
            if (used > 0 && ugrad.all_finite() && igrad.all_finite()) {
                ++step;
                const double scale = 1.0 / static_cast<double>(used);
                auto apply = [&](RowAccumulator& acc, std::vector<double>& params, std::vector<double>& m,
                                 std::vector<double>& v) {
                    for (std::size_t r : acc.rows()) {
                        auto g = acc.row(r);
                        for (double& x : g) x *= scale;
                        const std::size_t off = r * d;
                        adam_update({params.data() + off, d}, g, {m.data() + off, d}, {v.data() + off, d}, step,
                                    hyper);
                    }
                };
                apply(ugrad, model.user_data(), um, uv);
                apply(igrad, model.item_data(), im, iv);
            } else if (used > 0) {
                ++result.skipped_steps;
            }
            ugrad.clear();
            igrad.clear();
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
        if (!std::isfinite(rec.loss)) {
            if (++non_finite_epochs >= 2) {
                result.log.push_back(rec);
                std::ostringstream os;
                os << "training diverged: loss non-finite in epochs " << epoch - 1 << " and " << epoch;
                throw TrainingDiverged(os.str());
            }
        } else {
            non_finite_epochs = 0;
        }

        bool stop = false;
        if (epoch % cfg.eval_interval == 0 || epoch == cfg.epochs) {
            const double val = validation_ndcg5(model, data, cfg.threads);
            rec.val_ndcg5 = val;
            if (val > result.best_val_ndcg5) {
                result.best_val_ndcg5 = val;
                result.best_epoch = epoch;
                best = model;
                stale_intervals = 0;
            } else if (cfg.patience > 0 && ++stale_intervals >= cfg.patience) {
                stop = true;
            }
        }
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(epoch, model, active);
        if (stop) {
            result.stopped_early = true;
            log_info("early stop at epoch " + std::to_string(epoch) + ", best epoch " +
                     std::to_string(result.best_epoch));
            break;
        }
    }
    if (result.skipped_instances > 0) {
        log_warning(std::to_string(result.skipped_instances) + " instances skipped (singular k-minor after jitter)");
    }

    result.learning_rate = cfg.learning_rate;
    if (cfg.select_best) {
        result.model = std::move(best);
        result.selection_score = result.best_val_ndcg5;
    } else {
        result.model = std::move(model);
        result.selection_score = validation_ndcg5(result.model, data, cfg.threads);
    }
    return result;
}

TrainResult train_lr_search(TrainConfig config, const InteractionDataset& data, const DiversityKernel& kernel,
                            std::span<const double> learning_rates, std::vector<std::pair<double, double>>* per_rate) {
    if (learning_rates.empty()) throw ContractViolation("train_lr_search: no learning rates given");
    std::optional<TrainResult> best;
    for (double lr : learning_rates) {
        config.learning_rate = lr;
        TrainResult r = train(config, data, kernel);
        log_info("learning rate " + std::to_string(lr) + ": validation NDCG@5 " + std::to_string(r.selection_score));
        if (per_rate) per_rate->emplace_back(lr, r.selection_score);
        if (!best || r.selection_score > best->selection_score) best = std::move(r);
    }
    return std::move(*best);
}

} // namespace lkp
