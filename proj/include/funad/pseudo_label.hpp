#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "funad/feature_store.hpp"
#include "funad/localnet.hpp"
#include "funad/nearest.hpp"
#include "funad/rng.hpp"

namespace funad {

/// tau_b filters images into the memory bank, tau_n splits normal from
/// anomaly pseudo-labels, tau_c marks confident anomalies.
struct Thresholds {
    double tau_b = 0.5;
    double tau_n = 0.5;
    double tau_c = 0.9;

    void validate() const;
};

/// Location of a patch: image index and patch index within that image.
struct PatchRef {
    std::size_t image = 0;
    std::size_t patch = 0;

    friend bool operator==(const PatchRef&, const PatchRef&) = default;
};

/// Adapted features of every patch of the selected images.
struct MemoryBank {
    RowMatrix vectors;
    std::vector<PatchRef> provenance;         // one per row of `vectors`
    std::vector<std::size_t> source_images;   // selected subset, ascending
    std::vector<std::size_t> candidate_images;  // images that passed the filter, ascending

    std::size_t size() const { return vectors.rows; }
};

/// Min-max normalization to [0, 1]. All-equal input maps to all zeros.
std::vector<double> min_max_normalize(std::span<const double> values);

/// Max over patches of the Local-Net score, one value per image.
std::vector<double> raw_image_scores(const LocalNetParams& params, const FeatureTensor& features);

/// raw_image_scores, min-max normalized across images.
std::vector<double> image_scores(const LocalNetParams& params, const FeatureTensor& features);

/// Images whose normalized score is strictly below tau_b.
std::vector<std::size_t> filter_normal_images(std::span<const double> normalized_scores, double tau_b);

/// Adapted features of every patch of `images`, in the given order.
MemoryBank assemble_bank(const LocalNetParams& params, const FeatureTensor& features,
                         std::vector<std::size_t> images);

/// Filter by tau_b, keep a seeded random ceil(sample_ratio * |P|) subset,
/// and adapt all of its patches. Throws EmptyBankError if no image passes.
MemoryBank build_memory_bank(const LocalNetParams& params, const FeatureTensor& features,
                             const Thresholds& thresholds, double sample_ratio, std::uint64_t seed);

/// Same, from precomputed normalized image scores and a caller-owned generator.
MemoryBank build_memory_bank_from_scores(const LocalNetParams& params, const FeatureTensor& features,
                                         std::span<const double> normalized_scores,
                                         const Thresholds& thresholds, double sample_ratio, Rng& rng);

/// Per-patch pseudo-labeling state for one mini-batch.
struct PseudoLabelBatch {
    std::vector<double> distance;       // nearest-bank distance, zero distances excluded
    std::vector<double> score;          // distance min-max normalized over the batch
    std::vector<std::uint8_t> label;    // 1 = anomaly
    std::vector<std::uint8_t> ambiguous;

    std::size_t size() const { return distance.size(); }
};

/// Nearest non-identical bank vector for each query. Throws EmptyBankError
/// when a query has no bank entry at positive distance.
PseudoLabelBatch nn_scores(const MemoryBank& bank, const RowMatrix& adapted);

/// label = score >= tau_n; ambiguous = tau_n < score < tau_c.
void assign_labels(PseudoLabelBatch& batch, const Thresholds& thresholds);

/// Which candidates may pair with a patch.
enum class PairConstraint {
    DistinctPatch,             // anything but the patch itself
    DistinctImageAndPosition,  // image index and patch index must both differ
};

struct MutualPairSet {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (a, b) with a < b

    std::size_t size() const { return pairs.size(); }
};

/// Pairs whose members are each other's nearest neighbour (ties to the
/// lowest index). `provenance` is required only for DistinctImageAndPosition.
MutualPairSet find_mutual_pairs(const RowMatrix& adapted, std::span<const PatchRef> provenance = {},
                                PairConstraint constraint = PairConstraint::DistinctPatch);

struct AugmentResult {
    RowMatrix features;
    std::size_t n_augmented = 0;
    bool skipped = false;  // batch too small to estimate a variance
};

/// Adds N(0, diag(per-dim sample variance of the batch)) noise to ambiguous rows.
AugmentResult augment_ambiguous(const RowMatrix& batch_features, const PseudoLabelBatch& batch, Rng& rng);
AugmentResult augment_ambiguous(const RowMatrix& batch_features, const PseudoLabelBatch& batch,
                                std::uint64_t seed);

}  // namespace funad
