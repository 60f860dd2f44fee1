#include "funad/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>

#include "funad/error.hpp"
#include "funad/parallel.hpp"

namespace funad {

void Thresholds::validate() const {
    if (!(tau_b > 0.0 && tau_b <= 1.0)) throw ArgumentError("tau_b must lie in (0, 1]");
    if (!(tau_n > 0.0 && tau_n < 1.0)) throw ArgumentError("tau_n must lie in (0, 1)");
    if (!(tau_c > tau_n && tau_c <= 1.0)) throw ArgumentError("tau_c must lie in (tau_n, 1]");
}

std::vector<double> min_max_normalize(std::span<const double> values) {
    std::vector<double> out(values.size(), 0.0);
    if (values.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / range;
    return out;
}

std::vector<double> raw_image_scores(const LocalNetParams& params, const FeatureTensor& features) {
    if (features.n_images() == 0) throw ArgumentError("image_scores: no images");
    if (features.dim() != params.d_in()) throw ArgumentError("image_scores: feature dim does not match network");
    const auto patch_scores = score_rows(params, features.data(), features.total_patches());
    const std::size_t p = features.n_patches();
    std::vector<double> g(features.n_images());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = *std::max_element(patch_scores.begin() + i * p, patch_scores.begin() + (i + 1) * p);
    }
    return g;
}

std::vector<double> image_scores(const LocalNetParams& params, const FeatureTensor& features) {
    return min_max_normalize(raw_image_scores(params, features));
}

std::vector<std::size_t> filter_normal_images(std::span<const double> normalized_scores, double tau_b) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < normalized_scores.size(); ++i) {
        if (normalized_scores[i] < tau_b) kept.push_back(i);
    }
    return kept;
}

MemoryBank assemble_bank(const LocalNetParams& params, const FeatureTensor& features,
                         std::vector<std::size_t> images) {
    const std::size_t p = features.n_patches();
    const std::size_t d = features.dim();
    std::vector<float> rows;
    rows.reserve(images.size() * p * d);
    MemoryBank bank;
    bank.provenance.reserve(images.size() * p);
    for (std::size_t i : images) {
        const auto block = features.image(i);
        rows.insert(rows.end(), block.begin(), block.end());
        for (std::size_t j = 0; j < p; ++j) bank.provenance.push_back({i, j});
    }
    bank.vectors = adapt_rows(params, rows, images.size() * p);
    bank.source_images = std::move(images);
    return bank;
}

MemoryBank build_memory_bank_from_scores(const LocalNetParams& params, const FeatureTensor& features,
                                         std::span<const double> normalized_scores,
                                         const Thresholds& thresholds, double sample_ratio, Rng& rng) {
    if (!(sample_ratio > 0.0 && sample_ratio <= 1.0)) throw ArgumentError("sample_ratio must lie in (0, 1]");
    if (normalized_scores.size() != features.n_images()) throw ArgumentError("score count mismatch");
    auto candidates = filter_normal_images(normalized_scores, thresholds.tau_b);
    if (candidates.empty()) throw EmptyBankError("no image scored below tau_b");
    const auto keep = static_cast<std::size_t>(std::ceil(sample_ratio * static_cast<double>(candidates.size()) - 1e-9));
    auto picks = rng.sample_without_replacement(candidates.size(), std::max<std::size_t>(keep, 1));
    std::vector<std::size_t> chosen;
    chosen.reserve(picks.size());
    for (std::size_t k : picks) chosen.push_back(candidates[k]);
    std::sort(chosen.begin(), chosen.end());
    MemoryBank bank = assemble_bank(params, features, std::move(chosen));
    bank.candidate_images = std::move(candidates);
    return bank;
}

MemoryBank build_memory_bank(const LocalNetParams& params, const FeatureTensor& features,
                             const Thresholds& thresholds, double sample_ratio, std::uint64_t seed) {
    thresholds.validate();
    const auto scores = image_scores(params, features);
    Rng rng(seed);
    return build_memory_bank_from_scores(params, features, scores, thresholds, sample_ratio, rng);
}

PseudoLabelBatch nn_scores(const MemoryBank& bank, const RowMatrix& adapted) {
    if (bank.size() == 0) throw EmptyBankError("memory bank is empty");
    if (adapted.cols != bank.vectors.cols) throw ArgumentError("nn_scores: adapted width differs from bank");
    const std::size_t n = adapted.rows;
    PseudoLabelBatch out;
    out.distance.assign(n, 0.0);
    std::vector<std::uint8_t> exhausted(n, 0);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t q = b; q < e; ++q) {
            double best = std::numeric_limits<double>::infinity();
            const auto row = adapted.row(q);
            for (std::size_t m = 0; m < bank.size(); ++m) {
                const double d2 = squared_distance(row, bank.vectors.row(m));
                if (d2 > 0.0 && d2 < best) best = d2;
            }
            if (std::isinf(best)) exhausted[q] = 1;
            out.distance[q] = std::sqrt(best);
        }
    });
    for (std::size_t q = 0; q < n; ++q) {
        if (exhausted[q]) {
            throw EmptyBankError("query " + std::to_string(q) + " has no bank entry at positive distance");
        }
    }
    out.score = min_max_normalize(out.distance);
    out.label.assign(n, 0);
    out.ambiguous.assign(n, 0);
    return out;
}

void assign_labels(PseudoLabelBatch& batch, const Thresholds& thresholds) {
    const std::size_t n = batch.score.size();
    batch.label.assign(n, 0);
    batch.ambiguous.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
        const double s = batch.score[k];
        batch.label[k] = s >= thresholds.tau_n ? 1 : 0;
        batch.ambiguous[k] = (s > thresholds.tau_n && s < thresholds.tau_c) ? 1 : 0;
    }
}

MutualPairSet find_mutual_pairs(const RowMatrix& adapted, std::span<const PatchRef> provenance,
                                PairConstraint constraint) {
    MutualPairSet out;
    if (adapted.rows < 2) return out;
    std::function<bool(std::size_t, std::size_t)> allowed;
    if (constraint == PairConstraint::DistinctImageAndPosition) {
        if (provenance.size() != adapted.rows) {
            throw ArgumentError("find_mutual_pairs: provenance required for this constraint");
        }
        allowed = [provenance](std::size_t a, std::size_t b) {
            return provenance[a].image != provenance[b].image && provenance[a].patch != provenance[b].patch;
        };
    }
    const auto nearest = nearest_within(adapted, allowed);
    for (std::size_t a = 0; a < adapted.rows; ++a) {
        const std::size_t b = nearest[a];
        if (b != kNoNeighbor && a < b && nearest[b] == a) out.pairs.emplace_back(a, b);
    }
    return out;
}

AugmentResult augment_ambiguous(const RowMatrix& batch_features, const PseudoLabelBatch& batch, Rng& rng) {
    if (batch.ambiguous.size() != batch_features.rows) {
        throw ArgumentError("augment_ambiguous: label count does not match batch rows");
    }
    AugmentResult result{batch_features, 0, false};
    const std::size_t n = batch_features.rows;
    const std::size_t d = batch_features.cols;
    const bool any = std::any_of(batch.ambiguous.begin(), batch.ambiguous.end(), [](auto v) { return v != 0; });
    if (!any) return result;
    if (n < 2) {
        std::cerr << "warning: mini-batch of size 1, skipping ambiguous-feature augmentation\n";
        result.skipped = true;
        return result;
    }
    std::vector<double> mean(d, 0.0), stddev(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = batch_features.row(i);
        for (std::size_t k = 0; k < d; ++k) mean[k] += r[k];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = batch_features.row(i);
        for (std::size_t k = 0; k < d; ++k) stddev[k] += (r[k] - mean[k]) * (r[k] - mean[k]);
    }
    for (double& s : stddev) s = std::sqrt(s / static_cast<double>(n - 1));

    for (std::size_t i = 0; i < n; ++i) {
        if (!batch.ambiguous[i]) continue;
        auto r = result.features.row(i);
        for (std::size_t k = 0; k < d; ++k) r[k] += stddev[k] * rng.normal();
        ++result.n_augmented;
    }
    return result;
}

AugmentResult augment_ambiguous(const RowMatrix& batch_features, const PseudoLabelBatch& batch,
                                std::uint64_t seed) {
    Rng rng(seed);
    return augment_ambiguous(batch_features, batch, rng);
}

}  // namespace funad
