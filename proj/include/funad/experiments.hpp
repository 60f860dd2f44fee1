#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "funad/feature_store.hpp"
#include "funad/stats.hpp"
#include "funad/train.hpp"

namespace funad {

/// Log-spaced grid of `count` points over [lo, hi].
std::vector<double> log_grid(double lo, double hi, std::size_t count);

struct RatioRow {
    double tau = 0.0;
    double nn_over_aa = 0.0;
    double nn_over_na = 0.0;
};

/// Analytic NN/AA and NN/NA probability ratios over a tau grid.
std::vector<RatioRow> ratio_table(const stats::GaussianPairModel& model, const std::vector<double>& taus);

/// Contaminated isotropic-Gaussian end-to-end run.
struct ToyExperimentConfig {
    SyntheticGaussianConfig data = SyntheticGaussianConfig::motivation_default();
    double contamination = 0.10;
    std::size_t n_test_normal = 500;
    std::size_t n_test_anomaly = 500;
    std::size_t min_iterations = 2000;
    TrainConfig train;
    std::uint64_t seed = 0;

    /// Widths 16/32/16/1 and a learning rate suited to a short run.
    static ToyExperimentConfig standard(std::uint64_t seed);
};

struct ToyCheckpoint {
    std::size_t epoch = 0;
    std::size_t iteration = 0;  // iterations completed
    double test_auroc = 0.0;
    double bank_purity = 0.0;
};

struct ToyExperimentResult {
    std::vector<ToyCheckpoint> trajectory;  // one row per epoch
    double final_test_auroc = 0.0;
    double initial_test_auroc = 0.0;
    double final_bank_purity = 0.0;
    std::size_t iterations = 0;
    TrainResult training;
};

ToyExperimentResult run_toy_experiment(const ToyExperimentConfig& config);

}  // namespace funad
