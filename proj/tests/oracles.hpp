#pragma once

// Independent reference implementations used only by tests. They are
// written as plain scalar loops with no sharing of library internals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "funad/localnet.hpp"
#include "funad/pseudo_label.hpp"

namespace oracle {

/// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("funad_test_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline std::vector<unsigned char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline double lrelu(double z, double slope) { return z > 0 ? z : slope * z; }

/// Scalar forward pass; returns (adapted feature after layer 1, score).
inline std::pair<std::vector<double>, double> forward(const funad::LocalNetParams& p, const std::vector<double>& x) {
    const auto& L1 = p.layers.layer1;
    const auto& L2 = p.layers.layer2;
    const auto& L3 = p.layers.layer3;
    std::vector<double> h1(L1.out), h2(L2.out);
    for (std::size_t o = 0; o < L1.out; ++o) {
        double z = L1.bias[o];
        for (std::size_t i = 0; i < L1.in; ++i) z += x[i] * L1.weights[i * L1.out + o];
        h1[o] = lrelu(z, p.leaky_slope);
    }
    for (std::size_t o = 0; o < L2.out; ++o) {
        double z = L2.bias[o];
        for (std::size_t i = 0; i < L2.in; ++i) z += h1[i] * L2.weights[i * L2.out + o];
        h2[o] = lrelu(z, p.leaky_slope);
    }
    double z = L3.bias[0];
    for (std::size_t i = 0; i < L3.in; ++i) z += h2[i] * L3.weights[i];
    return {h1, 1.0 / (1.0 + std::exp(-z))};
}

inline double score(const funad::LocalNetParams& p, const std::vector<double>& x) { return forward(p, x).second; }

/// Balanced BCE as a literal per-term sum.
inline double bce(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
    double pos = 0, neg = 0;
    int np = 0, nn = 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double c = std::min(std::max(s[k], 1e-7), 1 - 1e-7);
        if (y[k]) { pos += std::log(c); ++np; } else { neg += std::log(1 - c); ++nn; }
    }
    return -((np ? pos / np : 0.0) + (nn ? neg / nn : 0.0));
}

inline double ms(const std::vector<double>& s, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    if (pairs.empty()) return 0.0;
    double t = 0;
    for (auto [a, b] : pairs) t += std::fabs(s[a] - s[b]);
    return t / static_cast<double>(pairs.size());
}

inline std::vector<double> row_vec(const funad::RowMatrix& m, std::size_t r) {
    auto s = m.row(r);
    return {s.begin(), s.end()};
}

/// Composite loss recomputed from scratch: BCE on augmented rows plus
/// weight * L1 smoothness on original rows.
inline double composite(const funad::LocalNetParams& p, const funad::RowMatrix& original,
                        const funad::RowMatrix& augmented, const std::vector<std::uint8_t>& labels,
                        const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double weight) {
    std::vector<double> sa, so;
    for (std::size_t r = 0; r < original.rows; ++r) {
        sa.push_back(score(p, row_vec(augmented, r)));
        so.push_back(score(p, row_vec(original, r)));
    }
    return bce(sa, labels) + weight * ms(so, pairs);
}

/// Index of the nearest other row, ties to the lowest index.
inline std::size_t nearest(const std::vector<std::vector<double>>& pts, std::size_t q) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < pts.size(); ++k) {
        if (k == q) continue;
        double d = 0;
        for (std::size_t c = 0; c < pts[q].size(); ++c) d += (pts[q][c] - pts[k][c]) * (pts[q][c] - pts[k][c]);
        if (d < bd) { bd = d; best = k; }
    }
    return best;
}

inline std::vector<std::pair<std::size_t, std::size_t>> mutual_pairs(const std::vector<std::vector<double>>& pts) {
    std::vector<std::size_t> nn(pts.size());
    for (std::size_t q = 0; q < pts.size(); ++q) nn[q] = nearest(pts, q);
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < pts.size(); ++a) {
        if (nn[a] > a && nn[a] < pts.size() && nn[nn[a]] == a) out.emplace_back(a, nn[a]);
    }
    return out;
}

/// O(n^2) Mann-Whitney pair counting, returned as an exact fraction
/// (twice the numerator, denominator) so callers can compare exactly.
inline std::pair<long long, long long> auroc_pairs(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
    long long twice = 0, pairs = 0;
    for (std::size_t a = 0; a < s.size(); ++a) {
        if (!y[a]) continue;
        for (std::size_t b = 0; b < s.size(); ++b) {
            if (y[b]) continue;
            ++pairs;
            if (s[a] > s[b]) twice += 2;
            else if (s[a] == s[b]) twice += 1;
        }
    }
    return {twice, pairs};
}

inline double auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
    auto [t, p] = auroc_pairs(s, y);
    return static_cast<double>(t) / (2.0 * static_cast<double>(p));
}

/// Reference bilinear resize (half-pixel centres, clamped) and blur
/// (scipy-style "reflect": d c b a | a b c d | d c b a).
inline std::vector<double> resize(const std::vector<double>& in, int h, int w, int oh, int ow) {
    std::vector<double> out(static_cast<std::size_t>(oh * ow));
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double sy = std::clamp((y + 0.5) * h / oh - 0.5, 0.0, h - 1.0);
            double sx = std::clamp((x + 0.5) * w / ow - 0.5, 0.0, w - 1.0);
            int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
            int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
            double fy = sy - y0, fx = sx - x0;
            auto v = [&](int yy, int xx) { return in[static_cast<std::size_t>(yy * w + xx)]; };
            out[static_cast<std::size_t>(y * ow + x)] = (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) +
                                                        fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
        }
    }
    return out;
}

inline int reflect(int i, int n) {
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

inline std::vector<double> blur(const std::vector<double>& in, int h, int w, double sigma) {
    const int r = static_cast<int>(4.0 * sigma + 0.5);
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0;
    for (int t = -r; t <= r; ++t) sum += k[static_cast<std::size_t>(t + r)] = std::exp(-0.5 * t * t / (sigma * sigma));
    for (auto& v : k) v /= sum;
    std::vector<double> tmp(in.size()), out(in.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double a = 0;
            for (int t = -r; t <= r; ++t) a += k[static_cast<std::size_t>(t + r)] * in[static_cast<std::size_t>(y * w + reflect(x + t, w))];
            tmp[static_cast<std::size_t>(y * w + x)] = a;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double a = 0;
            for (int t = -r; t <= r; ++t) a += k[static_cast<std::size_t>(t + r)] * tmp[static_cast<std::size_t>(reflect(y + t, h) * w + x)];
            out[static_cast<std::size_t>(y * w + x)] = a;
        }
    return out;
}

/// Random small network with every parameter drawn from N(0, scale^2).
inline funad::LocalNetParams random_net(std::size_t d_in, std::size_t h1, std::size_t h2, std::uint64_t seed,
                                        double scale = 0.5) {
    auto p = funad::LocalNetParams::zeros({d_in, h1, h2});
    std::mt19937_64 g(seed);
    std::normal_distribution<double> n(0.0, scale);
    for (std::size_t k = 0; k < p.layers.parameter_count(); ++k) p.layers.at(k) = n(g);
    return p;
}

inline funad::RowMatrix random_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    funad::RowMatrix m(rows, cols);
    std::mt19937_64 g(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : m.data) v = n(g);
    return m;
}

}  // namespace oracle
