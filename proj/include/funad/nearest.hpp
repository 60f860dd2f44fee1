#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace funad {

/// Dense row-major matrix of double vectors.
struct RowMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    RowMatrix() = default;
    RowMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<double> row(std::size_t i) { return std::span<double>(data).subspan(i * cols, cols); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(data).subspan(i * cols, cols);
    }
};

double squared_distance(std::span<const double> a, std::span<const double> b);

inline constexpr std::size_t kNoNeighbor = std::numeric_limits<std::size_t>::max();

/// Brute-force nearest neighbour of every row among the other rows.
///
/// `allowed(a, b)` may veto candidate b for query a; self is always
/// excluded. Ties go to the lowest index. Rows with no admissible
/// candidate get kNoNeighbor.
std::vector<std::size_t> nearest_within(
    const RowMatrix& points,
    const std::function<bool(std::size_t, std::size_t)>& allowed = nullptr);

}  // namespace funad
