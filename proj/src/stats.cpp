#include "funad/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "funad/error.hpp"
#include "funad/nearest.hpp"
#include "funad/parallel.hpp"

namespace funad::stats {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxIterations = 100000;

// Series expansion, accurate for x < a + 1.
double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < kMaxIterations; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x) (modified Lentz), accurate for x >= a + 1.
double gamma_q_continued_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIterations; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

std::vector<double> to_double_rows(const FeatureTensor& t) {
    auto src = t.data();
    return std::vector<double>(src.begin(), src.end());
}

std::vector<ImageLabel> per_sample_labels(const FeatureTensor& t, std::span<const ImageLabel> labels) {
    if (labels.size() != t.n_images()) throw ArgumentError("label count does not match n_images");
    std::vector<ImageLabel> out;
    out.reserve(t.total_patches());
    for (std::size_t i = 0; i < t.n_images(); ++i) out.insert(out.end(), t.n_patches(), labels[i]);
    return out;
}

PairType classify(ImageLabel a, ImageLabel b) {
    if (a != b) return PairType::NA;
    return a == ImageLabel::Normal ? PairType::NN : PairType::AA;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
    if (!(a > 0.0)) throw DomainError("regularized_gamma_p: a must be positive");
    if (!(x >= 0.0)) throw DomainError("regularized_gamma_p: x must be non-negative");
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < a + 1.0) return std::clamp(gamma_p_series(a, x), 0.0, 1.0);
    return std::clamp(1.0 - gamma_q_continued_fraction(a, x), 0.0, 1.0);
}

double chi2_cdf(double x, std::size_t dof) {
    if (!(x >= 0.0)) throw DomainError("chi2_cdf: x must be non-negative");
    if (dof == 0) throw DomainError("chi2_cdf: dof must be >= 1");
    return regularized_gamma_p(0.5 * static_cast<double>(dof), 0.5 * x);
}

double noncentral_chi2_cdf(double x, std::size_t dof, double noncentrality, double tail_tolerance) {
    if (!(x >= 0.0)) throw DomainError("noncentral_chi2_cdf: x must be non-negative");
    if (!(noncentrality >= 0.0)) throw DomainError("noncentral_chi2_cdf: noncentrality must be non-negative");
    if (dof == 0) throw DomainError("noncentral_chi2_cdf: dof must be >= 1");
    if (!(tail_tolerance > 0.0)) throw DomainError("noncentral_chi2_cdf: tolerance must be positive");
    if (x == 0.0) return 0.0;
    if (noncentrality == 0.0) return chi2_cdf(x, dof);

    const double half_nc = 0.5 * noncentrality;
    const double half_x = 0.5 * x;
    const double half_dof = 0.5 * static_cast<double>(dof);
    const auto mode = static_cast<long>(std::floor(half_nc));
    const double mode_weight =
        std::exp(-half_nc + static_cast<double>(mode) * std::log(half_nc) - std::lgamma(mode + 1.0));

    double sum = 0.0;
    double mass = 0.0;
    // Downward from the mode; the weights shrink geometrically once past it.
    double w = mode_weight;
    for (long k = mode; k >= 0 && w > 0.0; --k) {
        sum += w * regularized_gamma_p(half_dof + k, half_x);
        mass += w;
        w *= static_cast<double>(k) / half_nc;
    }
    // Upward until the unvisited Poisson mass is below tolerance. Each skipped
    // term is a weight times a CDF <= 1, so the error is bounded by that mass.
    w = mode_weight * half_nc / static_cast<double>(mode + 1);
    for (long k = mode + 1; 1.0 - mass >= tail_tolerance && w > 0.0; ++k) {
        sum += w * regularized_gamma_p(half_dof + k, half_x);
        mass += w;
        w *= half_nc / static_cast<double>(k + 1);
        if (k - mode > kMaxIterations) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

std::string_view to_string(PairType t) {
    switch (t) {
        case PairType::NN: return "NN";
        case PairType::AA: return "AA";
        case PairType::NA: return "NA";
    }
    return "?";
}

void GaussianPairModel::validate() const {
    if (dim == 0) throw ArgumentError("GaussianPairModel: dim must be >= 1");
    if (!(sigma_normal > 0.0) || !(sigma_anomaly > 0.0)) {
        throw ArgumentError("GaussianPairModel: sigmas must be positive");
    }
    if ((!mu_normal.empty() && mu_normal.size() != dim) || (!mu_anomaly.empty() && mu_anomaly.size() != dim)) {
        throw ArgumentError("GaussianPairModel: mean vector length must equal dim");
    }
}

double GaussianPairModel::noncentrality() const {
    double gap = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
        const double a = mu_normal.empty() ? 0.0 : mu_normal[k];
        const double b = mu_anomaly.empty() ? 0.0 : mu_anomaly[k];
        gap += (a - b) * (a - b);
    }
    return gap / (sigma_normal * sigma_normal + sigma_anomaly * sigma_anomaly);
}

double pair_within_prob(const GaussianPairModel& model, PairType pair, double tau) {
    model.validate();
    if (!(tau > 0.0)) throw DomainError("pair_within_prob: tau must be positive");
    const double t2 = tau * tau;
    const double vn = model.sigma_normal * model.sigma_normal;
    const double va = model.sigma_anomaly * model.sigma_anomaly;
    switch (pair) {
        case PairType::NN: return chi2_cdf(t2 / (2.0 * vn), model.dim);
        case PairType::AA: return chi2_cdf(t2 / (2.0 * va), model.dim);
        case PairType::NA: return noncentral_chi2_cdf(t2 / (vn + va), model.dim, model.noncentrality());
    }
    throw ArgumentError("pair_within_prob: unknown pair type");
}

double prob_ratio(const GaussianPairModel& model, PairType numerator, PairType denominator, double tau) {
    const double den = pair_within_prob(model, denominator, tau);
    if (den < kUnderflowFloor) {
        throw UnderflowError("prob_ratio: denominator probability " + std::to_string(den) +
                             " is below the underflow floor at tau=" + std::to_string(tau));
    }
    return pair_within_prob(model, numerator, tau) / den;
}

PairHistogram distance_histogram(const FeatureTensor& tensor, std::span<const ImageLabel> labels,
                                 std::size_t bins) {
    if (bins == 0) throw ArgumentError("distance_histogram: bins must be >= 1");
    const auto sample_labels = per_sample_labels(tensor, labels);
    const std::size_t n = tensor.total_patches();
    if (n < 2) throw ArgumentError("distance_histogram: need at least 2 samples");
    const std::size_t d = tensor.dim();
    const auto rows = to_double_rows(tensor);
    auto row = [&](std::size_t i) { return std::span<const double>(rows).subspan(i * d, d); };

    // Fixed chunk count keeps floating-point reductions independent of threads.
    constexpr std::size_t kChunks = 64;
    struct Partial {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        std::array<double, 3> sum{};
        std::array<std::size_t, 3> count{};
        std::array<std::vector<std::size_t>, 3> bins;
    };
    std::vector<Partial> parts(std::min(kChunks, n));

    parallel_chunks(n, parts.size(), [&](std::size_t c, std::size_t b, std::size_t e) {
        auto& p = parts[c];
        for (std::size_t i = b; i < e; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dist = std::sqrt(squared_distance(row(i), row(j)));
                const auto t = static_cast<std::size_t>(classify(sample_labels[i], sample_labels[j]));
                p.lo = std::min(p.lo, dist);
                p.hi = std::max(p.hi, dist);
                p.sum[t] += dist;
                ++p.count[t];
            }
        }
    });

    PairHistogram h;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : parts) {
        lo = std::min(lo, p.lo);
        hi = std::max(hi, p.hi);
        for (std::size_t t = 0; t < 3; ++t) {
            h.totals[t] += p.count[t];
            h.mean_distance[t] += p.sum[t];
        }
    }
    for (std::size_t t = 0; t < 3; ++t) {
        h.mean_distance[t] = h.totals[t] ? h.mean_distance[t] / static_cast<double>(h.totals[t]) : 0.0;
    }
    h.edges.resize(bins + 1);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t k = 0; k <= bins; ++k) h.edges[k] = lo + width * static_cast<double>(k);
    h.edges[bins] = hi;

    parallel_chunks(n, parts.size(), [&](std::size_t c, std::size_t b, std::size_t e) {
        auto& p = parts[c];
        for (auto& v : p.bins) v.assign(bins, 0);
        for (std::size_t i = b; i < e; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dist = std::sqrt(squared_distance(row(i), row(j)));
                const auto t = static_cast<std::size_t>(classify(sample_labels[i], sample_labels[j]));
                std::size_t k = 0;
                if (hi > lo) {
                    k = static_cast<std::size_t>((dist - lo) / (hi - lo) * static_cast<double>(bins));
                    k = std::min(k, bins - 1);
                }
                ++p.bins[t][k];
            }
        }
    });
    for (auto& v : h.counts) v.assign(bins, 0);
    for (const auto& p : parts) {
        for (std::size_t t = 0; t < 3; ++t) {
            for (std::size_t k = 0; k < bins; ++k) h.counts[t][k] += p.bins[t][k];
        }
    }
    return h;
}

MatchingRatioReport matching_ratio(const FeatureTensor& tensor, std::span<const ImageLabel> labels) {
    const auto sample_labels = per_sample_labels(tensor, labels);
    const std::size_t n = tensor.total_patches();
    if (n < 2) throw ArgumentError("matching_ratio: need at least 2 samples");
    RowMatrix points(n, tensor.dim());
    std::copy(tensor.data().begin(), tensor.data().end(), points.data.begin());
    const auto nearest = nearest_within(points);

    MatchingRatioReport r;
    for (auto l : sample_labels) (l == ImageLabel::Normal ? r.n_normal : r.n_anomaly)++;
    for (std::size_t a = 0; a < n; ++a) {
        const std::size_t b = nearest[a];
        if (b == kNoNeighbor || b <= a || nearest[b] != a) continue;
        switch (classify(sample_labels[a], sample_labels[b])) {
            case PairType::NN: ++r.nn_pairs; break;
            case PairType::AA: ++r.aa_pairs; break;
            case PairType::NA: ++r.na_pairs; break;
        }
    }
    r.n_pairs = r.nn_pairs + r.aa_pairs + r.na_pairs;
    r.normal_class_empty = r.n_normal == 0;
    r.anomaly_class_empty = r.n_anomaly == 0;
    r.true_normal = r.n_normal ? 2.0 * static_cast<double>(r.nn_pairs) / static_cast<double>(r.n_normal) : 0.0;
    r.true_anomaly =
        r.n_anomaly ? 2.0 * static_cast<double>(r.aa_pairs) / static_cast<double>(r.n_anomaly) : 0.0;
    r.false_ratio = 2.0 * static_cast<double>(r.na_pairs) / static_cast<double>(n);
    return r;
}

}  // namespace funad::stats
