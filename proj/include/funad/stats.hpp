#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "funad/feature_store.hpp"

namespace funad::stats {

/// Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0.
double regularized_gamma_p(double a, double x);

/// CDF of the central chi-squared distribution with `dof` degrees of freedom.
double chi2_cdf(double x, std::size_t dof);

/// Default truncation bound on the Poisson tail mass left out of the series.
inline constexpr double kNoncentralTailTolerance = 1e-12;

/// CDF of the noncentral chi-squared distribution, as a Poisson(noncentrality/2)
/// mixture of central CDFs. Summation starts at the Poisson mode and stops once
/// the weight not yet visited is below `tail_tolerance`.
double noncentral_chi2_cdf(double x, std::size_t dof, double noncentrality,
                           double tail_tolerance = kNoncentralTailTolerance);

enum class PairType { NN = 0, AA = 1, NA = 2 };
std::string_view to_string(PairType t);
inline constexpr std::array<PairType, 3> kAllPairTypes{PairType::NN, PairType::AA, PairType::NA};

/// Normal class N(mu_normal, sigma_normal^2 I), anomaly class N(mu_anomaly, sigma_anomaly^2 I).
struct GaussianPairModel {
    std::size_t dim = 1;
    std::vector<double> mu_normal;
    std::vector<double> mu_anomaly;
    double sigma_normal = 1.0;
    double sigma_anomaly = 1.0;

    void validate() const;
    /// ||mu_normal - mu_anomaly||^2 / (sigma_normal^2 + sigma_anomaly^2).
    double noncentrality() const;
};

/// P(||x1 - x2|| < tau) for a pair of the given type.
double pair_within_prob(const GaussianPairModel& model, PairType pair, double tau);

/// Denominators below this are reported as UnderflowError.
inline constexpr double kUnderflowFloor = 1e-300;

double prob_ratio(const GaussianPairModel& model, PairType numerator, PairType denominator, double tau);

/// Pairwise Euclidean distances of all unordered sample pairs, binned per pair type.
/// Samples are patches; each patch takes its image's label.
struct PairHistogram {
    std::vector<double> edges;                    // bins + 1 edges spanning [min, max]
    std::array<std::vector<std::size_t>, 3> counts;  // indexed by PairType
    std::array<std::size_t, 3> totals{};
    std::array<double, 3> mean_distance{};        // 0 when the type is absent
};

PairHistogram distance_histogram(const FeatureTensor& tensor, std::span<const ImageLabel> labels,
                                 std::size_t bins);

/// Fractions of samples taking part in mutually closest pairs, by pair type.
struct MatchingRatioReport {
    double true_normal = 0.0;
    double true_anomaly = 0.0;
    double false_ratio = 0.0;
    std::size_t n_pairs = 0;
    std::size_t nn_pairs = 0;
    std::size_t aa_pairs = 0;
    std::size_t na_pairs = 0;
    std::size_t n_normal = 0;
    std::size_t n_anomaly = 0;
    bool normal_class_empty = false;
    bool anomaly_class_empty = false;
};

MatchingRatioReport matching_ratio(const FeatureTensor& tensor, std::span<const ImageLabel> labels);

}  // namespace funad::stats
