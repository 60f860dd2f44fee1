#include "funad/inference.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "funad/error.hpp"
#include "funad/parallel.hpp"

namespace funad {

namespace {

// Maps any integer index onto [0, n) by mirroring about the half-sample
// boundaries: ... c b a | a b c | c b a ...
std::size_t reflect_index(long i, std::size_t n) {
    const long period = 2 * static_cast<long>(n);
    long m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<long>(n)) m = period - 1 - m;
    return static_cast<std::size_t>(m);
}

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

std::uint32_t get_u32(const std::vector<char>& in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
    }
    return v;
}

}  // namespace

std::vector<double> patch_scores(const LocalNetParams& params, std::span<const float> image_features) {
    if (params.d_in() == 0 || image_features.size() % params.d_in() != 0) {
        throw ArgumentError("patch_scores: feature buffer is not a multiple of the network input");
    }
    return score_rows(params, image_features, image_features.size() / params.d_in());
}

double image_anomaly_score(const LocalNetParams& params, std::span<const float> image_features) {
    const auto s = patch_scores(params, image_features);
    if (s.empty()) throw ArgumentError("image_anomaly_score: image has no patches");
    return *std::max_element(s.begin(), s.end());
}

std::vector<double> image_anomaly_scores(const LocalNetParams& params, const FeatureTensor& features) {
    std::vector<double> out(features.n_images());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = image_anomaly_score(params, features.image(i));
    return out;
}

AnomalyMap bilinear_resize(const AnomalyMap& in, std::size_t out_h, std::size_t out_w) {
    if (in.height == 0 || in.width == 0 || out_h == 0 || out_w == 0) {
        throw ArgumentError("bilinear_resize: empty map");
    }
    AnomalyMap out{out_h, out_w, std::vector<double>(out_h * out_w)};
    auto axis = [](std::size_t dst, std::size_t n_in, std::size_t n_out, std::size_t& lo, std::size_t& hi,
                   double& frac) {
        double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
        lo = static_cast<std::size_t>(std::floor(src));
        hi = std::min(lo + 1, n_in - 1);
        frac = src - static_cast<double>(lo);
    };
    for (std::size_t y = 0; y < out_h; ++y) {
        std::size_t y0, y1;
        double fy;
        axis(y, in.height, out_h, y0, y1, fy);
        for (std::size_t x = 0; x < out_w; ++x) {
            std::size_t x0, x1;
            double fx;
            axis(x, in.width, out_w, x0, x1, fx);
            const double top = (1.0 - fx) * in.at(y0, x0) + fx * in.at(y0, x1);
            const double bottom = (1.0 - fx) * in.at(y1, x0) + fx * in.at(y1, x1);
            out.values[y * out_w + x] = (1.0 - fy) * top + fy * bottom;
        }
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma, double truncate) {
    if (!(sigma > 0.0)) throw ArgumentError("gaussian_kernel: sigma must be positive");
    const auto radius = static_cast<long>(truncate * sigma + 0.5);
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[i + radius] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

AnomalyMap gaussian_blur(const AnomalyMap& in, double sigma, double truncate) {
    if (!(sigma > 0.0)) return in;
    const auto k = gaussian_kernel(sigma, truncate);
    const long radius = static_cast<long>(k.size() / 2);
    const std::size_t h = in.height, w = in.width;
    AnomalyMap tmp{h, w, std::vector<double>(h * w)};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long t = -radius; t <= radius; ++t) {
                acc += k[t + radius] * in.at(y, reflect_index(static_cast<long>(x) + t, w));
            }
            tmp.values[y * w + x] = acc;
        }
    }
    AnomalyMap out{h, w, std::vector<double>(h * w)};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long t = -radius; t <= radius; ++t) {
                acc += k[t + radius] * tmp.at(reflect_index(static_cast<long>(y) + t, h), x);
            }
            out.values[y * w + x] = acc;
        }
    }
    return out;
}

AnomalyMap map_from_patch_scores(std::span<const double> scores, std::size_t grid_h, std::size_t grid_w,
                                 std::size_t out_h, std::size_t out_w, double blur_sigma) {
    if (grid_h * grid_w != scores.size()) {
        throw ArgumentError("anomaly_map: grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                            " does not hold " + std::to_string(scores.size()) + " patches");
    }
    AnomalyMap grid{grid_h, grid_w, std::vector<double>(scores.begin(), scores.end())};
    return gaussian_blur(bilinear_resize(grid, out_h, out_w), blur_sigma);
}

AnomalyMap anomaly_map(const LocalNetParams& params, std::span<const float> image_features, std::size_t grid_h,
                       std::size_t grid_w, std::size_t out_h, std::size_t out_w, double blur_sigma) {
    const auto s = patch_scores(params, image_features);
    return map_from_patch_scores(s, grid_h, grid_w, out_h, out_w, blur_sigma);
}

void write_map_file(std::span<const AnomalyMap> maps, const std::filesystem::path& path) {
    const std::size_t h = maps.empty() ? 0 : maps.front().height;
    const std::size_t w = maps.empty() ? 0 : maps.front().width;
    std::vector<char> out{'F', 'U', 'N', 'A'};
    put_u32(out, static_cast<std::uint32_t>(maps.size()));
    put_u32(out, static_cast<std::uint32_t>(h));
    put_u32(out, static_cast<std::uint32_t>(w));
    for (const auto& m : maps) {
        if (m.height != h || m.width != w) throw ArgumentError("write_map_file: maps differ in size");
        for (double v : m.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

std::vector<AnomalyMap> read_map_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 4 || std::string_view(bytes.data(), 4) != "FUNA") {
        throw FormatError(path.string() + ": expected magic \"FUNA\"");
    }
    if (bytes.size() < 16) throw TruncationError(path.string() + ": header truncated");
    const std::uint64_t n = get_u32(bytes, 4), h = get_u32(bytes, 8), w = get_u32(bytes, 12);
    if (bytes.size() != 16 + 4 * n * h * w) throw TruncationError(path.string() + ": payload size mismatch");
    std::vector<AnomalyMap> maps(n, AnomalyMap{h, w, std::vector<double>(h * w)});
    std::size_t off = 16;
    for (auto& m : maps) {
        for (double& v : m.values) {
            const float fv = std::bit_cast<float>(get_u32(bytes, off));
            if (!std::isfinite(fv)) throw DataError(path.string() + ": non-finite map value");
            v = fv;
            off += 4;
        }
    }
    return maps;
}

}  // namespace funad
