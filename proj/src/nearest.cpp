#include "funad/nearest.hpp"

#include "funad/parallel.hpp"

namespace funad {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

std::vector<std::size_t> nearest_within(const RowMatrix& points,
                                        const std::function<bool(std::size_t, std::size_t)>& allowed) {
    const std::size_t n = points.rows;
    std::vector<std::size_t> nearest(n, kNoNeighbor);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t a = begin; a < end; ++a) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_idx = kNoNeighbor;
            const auto qa = points.row(a);
            for (std::size_t b = 0; b < n; ++b) {
                if (b == a || (allowed && !allowed(a, b))) continue;
                const double d = squared_distance(qa, points.row(b));
                if (d < best) {
                    best = d;
                    best_idx = b;
                }
            }
            nearest[a] = best_idx;
        }
    });
    return nearest;
}

}  // namespace funad
