#include "funad/eval.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "funad/error.hpp"

namespace funad {

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ArgumentError("auroc: size mismatch");
    const std::size_t n = scores.size();
    const auto n_pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auroc: both classes must be present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // For each tie group: positives beat every negative strictly below,
    // and half of the negatives inside the group. Doubled to stay integral.
    std::uint64_t twice_u = 0;
    std::uint64_t neg_below = 0;
    for (std::size_t start = 0; start < n;) {
        std::size_t stop = start;
        std::uint64_t pos_in = 0, neg_in = 0;
        while (stop < n && scores[order[stop]] == scores[order[start]]) {
            (labels[order[stop]] ? pos_in : neg_in)++;
            ++stop;
        }
        twice_u += pos_in * (2 * neg_below + neg_in);
        neg_below += neg_in;
        start = stop;
    }
    return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

EvalReport evaluate(std::span<const double> image_scores, std::span<const AnomalyMap> maps,
                    const DatasetManifest& truth, const std::set<std::size_t>& exclusion) {
    if (!truth.image_labels) throw ArgumentError("evaluate: ground-truth labels required");
    const auto& labels = *truth.image_labels;
    if (labels.size() != image_scores.size()) {
        throw ArgumentError("evaluate: " + std::to_string(image_scores.size()) + " scores for " +
                            std::to_string(labels.size()) + " labels");
    }
    EvalReport report;
    std::vector<double> kept_scores;
    std::vector<std::uint8_t> kept_labels;
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (exclusion.contains(i)) {
            ++report.n_excluded;
            continue;
        }
        kept.push_back(i);
        kept_scores.push_back(image_scores[i]);
        kept_labels.push_back(labels[i] == ImageLabel::Anomaly ? 1 : 0);
        (labels[i] == ImageLabel::Anomaly ? report.n_pos : report.n_neg)++;
    }
    report.image_auroc = auroc(kept_scores, kept_labels);

    if (!maps.empty() && truth.pixel_masks) {
        const auto& masks = *truth.pixel_masks;
        if (maps.size() != labels.size() || masks.n_images != labels.size()) {
            throw ArgumentError("evaluate: map/mask count does not match labels");
        }
        std::vector<double> pix_scores;
        std::vector<std::uint8_t> pix_labels;
        for (std::size_t i : kept) {
            const auto& m = maps[i];
            if (m.height != masks.height || m.width != masks.width) {
                throw ArgumentError("evaluate: map dims differ from mask dims");
            }
            const auto mask = masks.mask(i);
            pix_scores.insert(pix_scores.end(), m.values.begin(), m.values.end());
            pix_labels.insert(pix_labels.end(), mask.begin(), mask.end());
        }
        report.pixel_auroc = auroc(pix_scores, pix_labels);
    }
    return report;
}

}  // namespace funad
