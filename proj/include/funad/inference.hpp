#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "funad/feature_store.hpp"
#include "funad/localnet.hpp"

namespace funad {

/// Row-major real-valued map.
struct AnomalyMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// Local-Net score of every patch of one image, in patch order.
std::vector<double> patch_scores(const LocalNetParams& params, std::span<const float> image_features);

/// Max-pooled patch score of one image (P x D features, row-major).
double image_anomaly_score(const LocalNetParams& params, std::span<const float> image_features);

/// Image scores for every image of a tensor.
std::vector<double> image_anomaly_scores(const LocalNetParams& params, const FeatureTensor& features);

/// Half-pixel-centre bilinear resize (align_corners = false), edge-clamped.
AnomalyMap bilinear_resize(const AnomalyMap& in, std::size_t out_h, std::size_t out_w);

/// Normalized 1-D Gaussian taps of radius floor(truncate * sigma + 0.5).
std::vector<double> gaussian_kernel(double sigma, double truncate = 4.0);

/// Separable Gaussian blur with symmetric (half-sample) reflect padding.
/// sigma <= 0 returns the input unchanged.
AnomalyMap gaussian_blur(const AnomalyMap& in, double sigma, double truncate = 4.0);

inline constexpr double kDefaultBlurSigma = 4.0;

/// Patch scores arranged row-major on the grid, resized to out_h x out_w, then blurred.
AnomalyMap anomaly_map(const LocalNetParams& params, std::span<const float> image_features, std::size_t grid_h,
                       std::size_t grid_w, std::size_t out_h, std::size_t out_w,
                       double blur_sigma = kDefaultBlurSigma);

/// Same pipeline for an already computed patch-score grid.
AnomalyMap map_from_patch_scores(std::span<const double> scores, std::size_t grid_h, std::size_t grid_w,
                                 std::size_t out_h, std::size_t out_w, double blur_sigma = kDefaultBlurSigma);

/// FUNA: magic, u32 n, u32 h, u32 w, then n*h*w float32.
void write_map_file(std::span<const AnomalyMap> maps, const std::filesystem::path& path);
std::vector<AnomalyMap> read_map_file(const std::filesystem::path& path);

}  // namespace funad
