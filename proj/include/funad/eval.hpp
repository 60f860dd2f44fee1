#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "funad/feature_store.hpp"
#include "funad/inference.hpp"

namespace funad {

/// Area under the ROC curve as the normalized Mann-Whitney U statistic;
/// tied positive/negative pairs count 1/2. O(n log n).
/// Throws UndefinedMetricError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct EvalReport {
    double image_auroc = 0.0;
    std::optional<double> pixel_auroc;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    std::size_t n_excluded = 0;
};

/// Image AUROC over non-excluded images; pixel AUROC pools every pixel of the
/// non-excluded images when maps and masks are both available.
EvalReport evaluate(std::span<const double> image_scores, std::span<const AnomalyMap> maps,
                    const DatasetManifest& truth, const std::set<std::size_t>& exclusion = {});

}  // namespace funad
