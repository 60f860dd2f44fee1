#include "funad/experiments.hpp"

#include <cmath>

#include "funad/error.hpp"
#include "funad/eval.hpp"
#include "funad/inference.hpp"

namespace funad {

std::vector<double> log_grid(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0 && hi >= lo) || count == 0) throw ArgumentError("log_grid: need 0 < lo <= hi and count >= 1");
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    const double step = std::log(hi / lo) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k) out[k] = lo * std::exp(step * static_cast<double>(k));
    out.back() = hi;
    return out;
}

std::vector<RatioRow> ratio_table(const stats::GaussianPairModel& model, const std::vector<double>& taus) {
    using stats::PairType;
    std::vector<RatioRow> rows;
    rows.reserve(taus.size());
    for (double tau : taus) {
        rows.push_back({tau, stats::prob_ratio(model, PairType::NN, PairType::AA, tau),
                        stats::prob_ratio(model, PairType::NN, PairType::NA, tau)});
    }
    return rows;
}

ToyExperimentConfig ToyExperimentConfig::standard(std::uint64_t seed) {
    ToyExperimentConfig c;
    c.seed = seed;
    c.data.seed = seed;
    c.train.seed = seed;
    c.train.hidden1 = 32;
    c.train.hidden2 = 16;
    c.train.optimizer.lr = 1e-3;
    return c;
}

namespace {

std::vector<std::uint8_t> to_bytes(const std::vector<ImageLabel>& labels) {
    std::vector<std::uint8_t> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] == ImageLabel::Anomaly ? 1 : 0;
    return out;
}

}  // namespace

ToyExperimentResult run_toy_experiment(const ToyExperimentConfig& config) {
    auto [pool, pool_manifest] = generate_synthetic(config.data);
    auto [normals, anomalies] = split_by_label(pool, *pool_manifest.image_labels);
    auto split = contaminate(normals, anomalies, config.contamination, config.seed ^ 0x5eedULL);

    SyntheticGaussianConfig test_cfg = config.data;
    test_cfg.n_normal = config.n_test_normal;
    test_cfg.n_anomaly = config.n_test_anomaly;
    test_cfg.seed = config.seed + 0x7e57ULL;
    auto [test, test_manifest] = generate_synthetic(test_cfg);
    const auto test_labels = to_bytes(*test_manifest.image_labels);

    TrainConfig tc = config.train;
    const std::size_t per_epoch = (split.train.n_images() + tc.batch_images - 1) / tc.batch_images;
    tc.epochs = (config.min_iterations + per_epoch - 1) / per_epoch;

    ToyExperimentResult result;
    TrainHooks hooks;
    hooks.on_start = [&](const LocalNetParams& params) {
        result.initial_test_auroc = auroc(image_anomaly_scores(params, test), test_labels);
    };
    hooks.truth = *split.truth.image_labels;
    double last_purity = 0.0;
    std::size_t done = 0;
    hooks.on_iteration = [&](const IterationLog& e) {
        last_purity = e.bank_purity.value_or(0.0);
        done = e.iteration + 1;
    };
    hooks.on_epoch_end = [&](std::size_t epoch, const LocalNetParams& params) {
        const double a = auroc(image_anomaly_scores(params, test), test_labels);
        result.trajectory.push_back({epoch, done, a, last_purity});
    };
    result.training = train(split.train, tc, hooks);
    result.iterations = result.training.log.size();
    result.final_test_auroc = auroc(image_anomaly_scores(result.training.params, test), test_labels);
    result.final_bank_purity = last_purity;
    return result;
}

}  // namespace funad
