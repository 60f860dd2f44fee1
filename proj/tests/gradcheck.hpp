#pragma once

// Central finite-difference check of the composite training objective.

#include <algorithm>
#include <cmath>
#include <random>

#include "funad/train.hpp"
#include "oracles.hpp"

namespace oracle {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t parameters = 0;
    std::size_t rows = 0;
    std::size_t pairs = 0;
    std::size_t ambiguous = 0;
};

/// Relative error with a floor so parameters whose true gradient is ~0
/// are judged on absolute error against that floor.
inline double rel_error(double a, double b, double floor = 1e-6) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

/// One randomized configuration: D_in 8, widths 8/4/1, 6-14 rows, random
/// labels with both classes, some rows perturbed as if augmented, mutual
/// pairs taken from the adapted features, weight in [0, 4].
inline GradCheckResult check_composite_gradient(std::uint64_t seed) {
    std::mt19937_64 g(seed * 7919 + 17);
    std::uniform_int_distribution<int> rows_dist(6, 14);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = static_cast<std::size_t>(rows_dist(g));
    auto params = random_net(8, 8, 4, seed + 1000, 0.6);
    params.adaptor = (seed % 2) ? funad::AdaptorBoundary::FirstHidden : funad::AdaptorBoundary::SecondHidden;
    const auto original = random_rows(n, 8, seed + 2000);

    std::vector<std::uint8_t> labels(n), ambiguous(n);
    for (std::size_t k = 0; k < n; ++k) labels[k] = u(g) < 0.5;
    labels[0] = 1;
    labels[1] = 0;
    funad::RowMatrix augmented = original;
    std::normal_distribution<double> noise(0.0, 0.3);
    for (std::size_t k = 0; k < n; ++k) {
        if (labels[k] && u(g) < 0.5) {
            ambiguous[k] = 1;
            for (auto& v : augmented.row(k)) v += noise(g);
        }
    }
    std::vector<std::vector<double>> adapted;
    for (std::size_t k = 0; k < n; ++k) adapted.push_back(forward(params, row_vec(original, k)).first);
    const auto pair_list = mutual_pairs(adapted);
    funad::MutualPairSet pairs{pair_list};
    const double weight = 4.0 * u(g);

    const auto objective =
        funad::composite_objective(params, original, augmented, labels, ambiguous, pairs, weight);

    GradCheckResult r;
    r.rows = n;
    r.pairs = pair_list.size();
    r.ambiguous = static_cast<std::size_t>(std::count(ambiguous.begin(), ambiguous.end(), 1));
    r.parameters = params.layers.parameter_count();
    for (std::size_t k = 0; k < r.parameters; ++k) {
        const double p0 = params.layers.at(k);
        const double h = 1e-5 * std::max(1.0, std::fabs(p0));
        params.layers.at(k) = p0 + h;
        const double up = composite(params, original, augmented, labels, pair_list, weight);
        params.layers.at(k) = p0 - h;
        const double down = composite(params, original, augmented, labels, pair_list, weight);
        params.layers.at(k) = p0;
        const double numeric = (up - down) / (2 * h);
        r.max_rel_error = std::max(r.max_rel_error, rel_error(objective.grads.at(k), numeric));
    }
    return r;
}

}  // namespace oracle
