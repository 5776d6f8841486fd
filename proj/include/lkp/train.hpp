#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lkp/dataset.hpp"
#include "lkp/diversity.hpp"
#include "lkp/embedding.hpp"
#include "lkp/sampling.hpp"

namespace lkp {

enum class Objective { lkp_ps, lkp_nps, bpr, bce };

std::string_view to_string(Objective o);
std::string_view to_string(SamplerMode s);
std::string_view to_string(KernelMode m);
Objective parse_objective(std::string_view s);
SamplerMode parse_sampler(std::string_view s);
KernelMode parse_kernel_mode(std::string_view s);

struct TrainConfig {
    Objective objective = Objective::lkp_nps;
    SamplerMode sampler = SamplerMode::S;
    KernelMode kernel_mode = KernelMode::pretrained;
    std::size_t k = 5;
    std::size_t n = 5;
    std::size_t dim = 64;
    double learning_rate = 1e-3;
    double l2 = 1e-4;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 64;
    std::size_t eval_interval = 5;
    std::size_t patience = 20;  // evaluation intervals without improvement; 0 disables early stopping
    std::size_t threads = 1;
    bool select_best = true;    // false returns the final-epoch parameters

    /// Throws ContractViolation on inconsistent settings (e.g. lkp_nps with n != k).
    void validate() const;
};

/// Named LkP variants: PR, PS, NPR, NPS, PSE, NPSE. Other fields keep their defaults.
TrainConfig variant_config(std::string_view name);
/// Variant name of a config, or the objective name for baselines.
std::string variant_name(const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;                 // mean per training unit; NaN for epoch 0
    std::optional<double> val_ndcg5;   // only on evaluation epochs
    double wall_ms = 0.0;

    nlohmann::json to_json() const;
};

struct TrainResult {
    EmbeddingTable model;
    std::vector<EpochRecord> log;
    std::size_t best_epoch = 0;
    double best_val_ndcg5 = 0.0;
    std::size_t skipped_instances = 0;  // singular kernels
    std::size_t skipped_steps = 0;      // non-finite batch gradients
    bool stopped_early = false;
    double learning_rate = 0.0;
    double selection_score = 0.0;  // validation NDCG@5 of the returned parameters
};

struct TrainHooks {
    /// Called after initialization (epoch 0) and after every epoch with the
    /// current parameters and the kernel in use.
    std::function<void(std::size_t, const EmbeddingTable&, const DiversityKernel&)> on_epoch;
};

/// Trains MF embeddings with the configured objective. For kernel_mode ==
/// pretrained the given kernel must be pretrained and frozen; in gaussian mode
/// the argument is ignored and a Gaussian kernel over the live item
/// embeddings is used, with sigma refreshed each epoch.
TrainResult train(const TrainConfig& config, const InteractionDataset& data, const DiversityKernel& kernel,
                  const TrainHooks& hooks = {});

inline constexpr double kDefaultLearningRates[] = {1e-2, 3e-3, 1e-3};

/// One training run per learning rate; returns the run whose returned
/// parameters score highest on validation NDCG@5 (earlier grid entries win
/// ties). `per_rate`, when given, receives every rate's selection score.
TrainResult train_lr_search(TrainConfig config, const InteractionDataset& data, const DiversityKernel& kernel,
                            std::span<const double> learning_rates,
                            std::vector<std::pair<double, double>>* per_rate = nullptr);

/// JSON-lines, one record per epoch: {epoch, loss, val_ndcg5, wall_ms}.
void write_train_log(const std::vector<EpochRecord>& log, const std::filesystem::path& path);

inline constexpr std::size_t kSigmaSamplePairs = 1000;

} // namespace lkp
