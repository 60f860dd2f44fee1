#include "funad/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "funad/error.hpp"
#include "funad/rng.hpp"

namespace funad {

namespace {

enum Stream : std::uint64_t { kInitStream = 1, kShuffleStream = 2, kBankStream = 3, kAugmentStream = 4 };

bool rows_equal(std::span<const double> a, std::span<const double> b) {
    return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

void check_pairs(const MutualPairSet& pairs, std::size_t n) {
    for (const auto& [a, b] : pairs.pairs) {
        if (a >= n || b >= n || a == b) throw ArgumentError("mutual pair index out of range");
    }
}

}  // namespace

double balanced_bce(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ArgumentError("balanced_bce: size mismatch");
    if (scores.empty()) throw ArgumentError("balanced_bce: empty batch");
    double pos = 0.0, neg = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
        const double s = std::clamp(scores[k], kScoreClamp, 1.0 - kScoreClamp);
        if (labels[k]) {
            pos += std::log(s);
            ++n_pos;
        } else {
            neg += std::log(1.0 - s);
            ++n_neg;
        }
    }
    double loss = 0.0;
    if (n_pos) loss -= pos / static_cast<double>(n_pos);
    if (n_neg) loss -= neg / static_cast<double>(n_neg);
    return loss;
}

std::vector<double> balanced_bce_grad(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ArgumentError("balanced_bce_grad: size mismatch");
    const auto n_pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
    const std::size_t n_neg = labels.size() - n_pos;
    std::vector<double> g(scores.size(), 0.0);
    for (std::size_t k = 0; k < scores.size(); ++k) {
        const double s = scores[k];
        if (s < kScoreClamp || s > 1.0 - kScoreClamp) continue;
        if (labels[k]) {
            g[k] = -1.0 / (static_cast<double>(n_pos) * s);
        } else {
            g[k] = 1.0 / (static_cast<double>(n_neg) * (1.0 - s));
        }
    }
    return g;
}

double mutual_smoothness(std::span<const double> scores, const MutualPairSet& pairs) {
    check_pairs(pairs, scores.size());
    if (pairs.pairs.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [a, b] : pairs.pairs) sum += std::abs(scores[a] - scores[b]);
    return sum / static_cast<double>(pairs.size());
}

std::vector<double> mutual_smoothness_grad(std::span<const double> scores, const MutualPairSet& pairs) {
    check_pairs(pairs, scores.size());
    std::vector<double> g(scores.size(), 0.0);
    if (pairs.pairs.empty()) return g;
    const double inv = 1.0 / static_cast<double>(pairs.size());
    for (const auto& [a, b] : pairs.pairs) {
        const double diff = scores[a] - scores[b];
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        g[a] += sign * inv;
        g[b] -= sign * inv;
    }
    return g;
}

void TrainConfig::validate() const {
    if (!(ms_weight >= 0.0)) throw ArgumentError("ms_weight must be non-negative");
    if (batch_images == 0) throw ArgumentError("batch_images must be >= 1");
    if (!(sample_ratio > 0.0 && sample_ratio <= 1.0)) throw ArgumentError("sample_ratio must lie in (0, 1]");
    if (hidden1 == 0 || hidden2 == 0) throw ArgumentError("hidden widths must be >= 1");
    if (!(optimizer.lr > 0.0)) throw ArgumentError("learning rate must be positive");
    if (!(optimizer.momentum >= 0.0)) throw ArgumentError("momentum must be non-negative");
    thresholds.validate();
}

BatchObjective composite_objective(const LocalNetParams& params, const RowMatrix& original,
                                   const RowMatrix& augmented, std::span<const std::uint8_t> labels,
                                   std::span<const std::uint8_t> ambiguous, const MutualPairSet& pairs,
                                   double ms_weight) {
    const std::size_t n = original.rows;
    if (augmented.rows != n || augmented.cols != original.cols || labels.size() != n || ambiguous.size() != n) {
        throw ArgumentError("composite_objective: batch shape mismatch");
    }
    BatchObjective out;
    const auto aug_scores = forward_batch(params, augmented).score;
    out.loss.l_phi = balanced_bce(aug_scores, labels);
    out.loss.n_pairs = pairs.size();
    for (std::size_t k = 0; k < n; ++k) {
        (labels[k] ? out.loss.n_anomaly_labeled : out.loss.n_normal_labeled)++;
        out.loss.n_ambiguous += ambiguous[k] ? 1 : 0;
    }

    std::vector<double> upstream = balanced_bce_grad(aug_scores, labels);
    RowMatrix inputs = augmented;

    if (!pairs.pairs.empty()) {
        // Rows whose augmented copy differs need a separate pass through the
        // original feature for the smoothness term.
        std::vector<std::size_t> extra_rows;
        std::vector<double> ms_grad;
        std::vector<double> orig_scores;
        bool all_same = true;
        for (std::size_t k = 0; k < n && all_same; ++k) all_same = rows_equal(original.row(k), augmented.row(k));
        orig_scores = all_same ? aug_scores : forward_batch(params, original).score;
        out.loss.l_ms = mutual_smoothness(orig_scores, pairs);
        if (ms_weight != 0.0) {
            ms_grad = mutual_smoothness_grad(orig_scores, pairs);
            for (std::size_t k = 0; k < n; ++k) {
                if (ms_grad[k] == 0.0) continue;
                if (rows_equal(original.row(k), augmented.row(k))) {
                    upstream[k] += ms_weight * ms_grad[k];
                } else {
                    extra_rows.push_back(k);
                }
            }
        }
        if (!extra_rows.empty()) {
            RowMatrix stacked(n + extra_rows.size(), original.cols);
            std::copy(inputs.data.begin(), inputs.data.end(), stacked.data.begin());
            upstream.resize(n + extra_rows.size());
            for (std::size_t e = 0; e < extra_rows.size(); ++e) {
                const auto src = original.row(extra_rows[e]);
                std::copy(src.begin(), src.end(), stacked.row(n + e).begin());
                upstream[n + e] = ms_weight * ms_grad[extra_rows[e]];
            }
            inputs = std::move(stacked);
        }
    }
    out.loss.total = out.loss.l_phi + ms_weight * out.loss.l_ms;
    out.grads = backward(params, inputs, upstream);
    return out;
}

TrainResult train(const FeatureTensor& features, const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    const std::size_t n_images = features.n_images();
    if (n_images == 0) throw ArgumentError("train: no training images");
    if (hooks.truth && hooks.truth->size() != n_images) throw ArgumentError("train: truth label count mismatch");

    const Rng root(config.seed);
    TrainResult result;
    result.params = LocalNetParams::initialize({features.dim(), config.hidden1, config.hidden2},
                                               root.fork(kInitStream).next_u64());
    result.params.adaptor = config.adaptor;
    result.optimizer = RmsPropState::for_params(result.params, config.optimizer);

    Rng shuffle_rng = root.fork(kShuffleStream);
    Rng bank_rng = root.fork(kBankStream);
    Rng augment_rng = root.fork(kAugmentStream);

    const std::size_t p = features.n_patches();
    const std::size_t d = features.dim();
    std::vector<std::size_t> order(n_images);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t iteration = 0;
    if (hooks.on_start) hooks.on_start(result.params);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < n_images; start += config.batch_images) {
            const std::size_t stop = std::min(n_images, start + config.batch_images);
            auto& params = result.params;
            IterationLog entry;
            entry.epoch = epoch;
            entry.iteration = iteration;

            // Memory bank from the current network.
            const auto scores = image_scores(params, features);
            MemoryBank bank;
            if (filter_normal_images(scores, config.thresholds.tau_b).empty()) {
                std::vector<std::size_t> ranked(n_images);
                std::iota(ranked.begin(), ranked.end(), std::size_t{0});
                std::stable_sort(ranked.begin(), ranked.end(),
                                 [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
                ranked.resize((n_images + 1) / 2);
                std::sort(ranked.begin(), ranked.end());
                bank = assemble_bank(params, features, ranked);
                bank.candidate_images = bank.source_images;
                entry.bank_fallback = true;
            } else {
                bank = build_memory_bank_from_scores(params, features, scores, config.thresholds,
                                                     config.sample_ratio, bank_rng);
            }

            // Mini-batch rows and their adapted features.
            const std::size_t rows = (stop - start) * p;
            RowMatrix batch(rows, d);
            std::vector<PatchRef> provenance;
            provenance.reserve(rows);
            for (std::size_t b = start; b < stop; ++b) {
                const auto block = features.image(order[b]);
                std::copy(block.begin(), block.end(), batch.row((b - start) * p).begin());
                for (std::size_t j = 0; j < p; ++j) provenance.push_back({order[b], j});
            }
            const auto acts = forward_batch(params, batch);
            const RowMatrix& adapted = acts.adapted(params.adaptor);

            PseudoLabelBatch labels;
            try {
                labels = nn_scores(bank, adapted);
            } catch (const EmptyBankError&) {
                // Every bank entry coincides with some query; widen to all images.
                std::vector<std::size_t> all(n_images);
                std::iota(all.begin(), all.end(), std::size_t{0});
                bank = assemble_bank(params, features, all);
                bank.candidate_images = bank.source_images;
                entry.bank_fallback = true;
                labels = nn_scores(bank, adapted);
            }
            assign_labels(labels, config.thresholds);

            const auto pairs = find_mutual_pairs(adapted, provenance, config.pair_constraint);
            RowMatrix augmented = config.augment ? augment_ambiguous(batch, labels, augment_rng).features : batch;

            auto objective = composite_objective(params, batch, augmented, labels.label, labels.ambiguous, pairs,
                                                 config.ms_weight);
            rmsprop_step(result.optimizer, params, objective.grads);

            entry.loss = objective.loss;
            entry.bank_size = bank.size();
            entry.bank_images = bank.source_images.size();
            if (hooks.truth) {
                std::size_t normal = 0;
                for (std::size_t i : bank.source_images) normal += (*hooks.truth)[i] == ImageLabel::Normal ? 1 : 0;
                entry.bank_purity = static_cast<double>(normal) / static_cast<double>(bank.source_images.size());
            }
            if (hooks.on_iteration) hooks.on_iteration(entry);
            result.log.push_back(entry);
            ++iteration;
        }
        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, result.params);
        const bool last = epoch + 1 == config.epochs;
        if (hooks.on_checkpoint &&
            (last || (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0))) {
            hooks.on_checkpoint(epoch, result.params, result.optimizer);
        }
    }
    return result;
}

}  // namespace funad
