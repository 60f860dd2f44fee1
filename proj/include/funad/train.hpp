#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "funad/feature_store.hpp"
#include "funad/localnet.hpp"
#include "funad/pseudo_label.hpp"

namespace funad {

/// Scores are clamped to [kScoreClamp, 1 - kScoreClamp] before the log.
inline constexpr double kScoreClamp = 1e-7;

/// Class-balanced binary cross-entropy: each class present in the batch is
/// averaged separately; an absent class contributes 0.
double balanced_bce(std::span<const double> scores, std::span<const std::uint8_t> labels);
/// d(balanced_bce)/d(score), zero where the clamp is active.
std::vector<double> balanced_bce_grad(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Mean absolute score difference over pairs; 0 for an empty set.
double mutual_smoothness(std::span<const double> scores, const MutualPairSet& pairs);
std::vector<double> mutual_smoothness_grad(std::span<const double> scores, const MutualPairSet& pairs);

struct TrainConfig {
    double ms_weight = 2.5;
    RmsPropConfig optimizer{};  // lr 2e-5, momentum 0.2
    std::size_t batch_images = 32;
    std::size_t epochs = 1500;
    Thresholds thresholds{};
    double sample_ratio = 0.5;
    std::uint64_t seed = 0;
    /// Epoch interval for the checkpoint hook; 0 disables it.
    std::size_t checkpoint_every = 0;
    /// Hidden widths; d_in always comes from the features.
    std::size_t hidden1 = 1024;
    std::size_t hidden2 = 128;
    AdaptorBoundary adaptor = AdaptorBoundary::FirstHidden;
    PairConstraint pair_constraint = PairConstraint::DistinctPatch;
    bool augment = true;

    void validate() const;
};

struct LossBreakdown {
    double l_phi = 0.0;
    double l_ms = 0.0;
    double total = 0.0;
    std::size_t n_anomaly_labeled = 0;
    std::size_t n_normal_labeled = 0;
    std::size_t n_ambiguous = 0;
    std::size_t n_pairs = 0;
};

struct IterationLog {
    std::size_t epoch = 0;
    std::size_t iteration = 0;  // global, from 0
    LossBreakdown loss;
    std::size_t bank_size = 0;    // vectors
    std::size_t bank_images = 0;  // |P'|
    bool bank_fallback = false;
    std::optional<double> bank_purity;  // only with diagnostic truth
};

/// Optional observers. Nothing here influences training.
struct TrainHooks {
    /// Ground-truth labels of the training images, for bank purity diagnostics.
    std::optional<std::vector<ImageLabel>> truth;
    /// Called once with the initialized network before the first step.
    std::function<void(const LocalNetParams&)> on_start;
    std::function<void(const IterationLog&)> on_iteration;
    /// Called every checkpoint_every epochs and after the last epoch.
    std::function<void(std::size_t epoch, const LocalNetParams&, const RmsPropState&)> on_checkpoint;
    /// Called after every epoch; may be used for validation-based selection.
    std::function<void(std::size_t epoch, const LocalNetParams&)> on_epoch_end;
};

struct TrainResult {
    LocalNetParams params;
    RmsPropState optimizer;
    std::vector<IterationLog> log;
};

/// Losses for one mini-batch plus the gradient of
/// balanced_bce(augmented) + ms_weight * mutual_smoothness(original).
struct BatchObjective {
    LossBreakdown loss;
    ParameterGradients grads;
};

/// Assembles the composite loss and its parameter gradient for a prepared
/// mini-batch. `augmented` equals `original` except on ambiguous rows.
BatchObjective composite_objective(const LocalNetParams& params, const RowMatrix& original,
                                   const RowMatrix& augmented, std::span<const std::uint8_t> labels,
                                   std::span<const std::uint8_t> ambiguous, const MutualPairSet& pairs,
                                   double ms_weight);

/// The full unsupervised training loop. Deterministic for fixed inputs and seed.
TrainResult train(const FeatureTensor& features, const TrainConfig& config, const TrainHooks& hooks = {});

}  // namespace funad
