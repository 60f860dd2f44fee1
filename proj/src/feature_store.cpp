#include "funad/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include "funad/error.hpp"
#include "funad/rng.hpp"

namespace funad {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::size_t kFeatureHeaderBytes = 4 + 6 * 4;

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

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > UINT32_MAX) throw ArgumentError(std::string(what) + " does not fit in u32");
    return static_cast<std::uint32_t>(v);
}

std::vector<char> read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_all(const fs::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

void expect_magic(const std::vector<char>& bytes, std::string_view magic, const fs::path& path) {
    if (bytes.size() < magic.size() || std::string_view(bytes.data(), magic.size()) != magic) {
        throw FormatError(path.string() + ": expected magic \"" + std::string(magic) + "\"");
    }
}

void expect_size(const std::vector<char>& bytes, std::uint64_t expected, const fs::path& path) {
    if (bytes.size() != expected) {
        throw TruncationError(path.string() + ": header declares " + std::to_string(expected) +
                              " bytes, file holds " + std::to_string(bytes.size()));
    }
}

}  // namespace

FeatureTensor::FeatureTensor(std::size_t n_images, std::size_t n_patches, std::size_t dim,
                             std::size_t grid_h, std::size_t grid_w, std::vector<float> data)
    : n_images_(n_images),
      n_patches_(n_patches),
      dim_(dim),
      grid_h_(grid_h),
      grid_w_(grid_w),
      data_(std::move(data)) {
    if (grid_h_ * grid_w_ != n_patches_) {
        throw DataError("grid " + std::to_string(grid_h_) + "x" + std::to_string(grid_w_) +
                        " does not match n_patches " + std::to_string(n_patches_));
    }
    if (data_.size() != n_images_ * n_patches_ * dim_) {
        throw DataError("feature payload has " + std::to_string(data_.size()) + " values, expected " +
                        std::to_string(n_images_ * n_patches_ * dim_));
    }
    for (std::size_t k = 0; k < data_.size(); ++k) {
        if (!std::isfinite(data_[k])) {
            throw DataError("non-finite feature value at flat index " + std::to_string(k));
        }
    }
}

std::span<const float> FeatureTensor::image(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * n_patches_ * dim_, n_patches_ * dim_);
}

std::span<const float> FeatureTensor::patch(std::size_t i, std::size_t j) const {
    return row(i * n_patches_ + j);
}

std::span<const float> FeatureTensor::row(std::size_t flat) const {
    return std::span<const float>(data_).subspan(flat * dim_, dim_);
}

FeatureTensor FeatureTensor::select(std::span<const std::size_t> images) const {
    std::vector<float> out;
    out.reserve(images.size() * n_patches_ * dim_);
    for (std::size_t i : images) {
        if (i >= n_images_) throw ArgumentError("select: image index out of range");
        auto block = image(i);
        out.insert(out.end(), block.begin(), block.end());
    }
    return FeatureTensor(images.size(), n_patches_, dim_, grid_h_, grid_w_, std::move(out));
}

void validate_manifest(const FeatureTensor& tensor, const DatasetManifest& manifest) {
    if (manifest.image_labels && manifest.image_labels->size() != tensor.n_images()) {
        throw DataError("label count " + std::to_string(manifest.image_labels->size()) +
                        " does not match n_images " + std::to_string(tensor.n_images()));
    }
    if (manifest.pixel_masks) {
        const auto& m = *manifest.pixel_masks;
        if (m.n_images != tensor.n_images()) throw DataError("mask count does not match n_images");
        if (m.data.size() != m.n_images * m.height * m.width) throw DataError("mask payload size mismatch");
        if ((manifest.image_h && *manifest.image_h != m.height) ||
            (manifest.image_w && *manifest.image_w != m.width)) {
            throw DataError("mask dims differ from image dims");
        }
    }
    if (manifest.image_h && manifest.image_w && manifest.patch_size) {
        const std::size_t k = *manifest.patch_size;
        if (k == 0 || (*manifest.image_h * *manifest.image_w) != k * k * tensor.n_patches()) {
            throw DataError("H*W/K^2 does not equal n_patches");
        }
    }
}

fs::path labels_path_for(const fs::path& features) {
    fs::path p = features;
    return p.replace_extension(".funl");
}

fs::path masks_path_for(const fs::path& features) {
    fs::path p = features;
    return p.replace_extension(".funm");
}

FeatureTensor read_feature_file(const fs::path& path) {
    const auto bytes = read_all(path);
    expect_magic(bytes, "FUNF", path);
    if (bytes.size() < kFeatureHeaderBytes) throw TruncationError(path.string() + ": header truncated");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kFeatureVersion) {
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    }
    const std::uint64_t n = get_u32(bytes, 8);
    const std::uint64_t p = get_u32(bytes, 12);
    const std::uint64_t d = get_u32(bytes, 16);
    const std::uint64_t gh = get_u32(bytes, 20);
    const std::uint64_t gw = get_u32(bytes, 24);
    if (gh * gw != p) throw FormatError(path.string() + ": grid_h*grid_w != n_patches");
    const std::uint64_t count = n * p * d;
    expect_size(bytes, kFeatureHeaderBytes + 4 * count, path);

    std::vector<float> data(count);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(data.data(), bytes.data() + kFeatureHeaderBytes, 4 * count);
    } else {
        for (std::uint64_t k = 0; k < count; ++k) {
            data[k] = std::bit_cast<float>(get_u32(bytes, kFeatureHeaderBytes + 4 * k));
        }
    }
    for (std::uint64_t k = 0; k < count; ++k) {
        if (!std::isfinite(data[k])) {
            throw DataError(path.string() + ": non-finite value at flat index " + std::to_string(k));
        }
    }
    return FeatureTensor(n, p, d, gh, gw, std::move(data));
}

void write_feature_file(const FeatureTensor& tensor, const fs::path& path) {
    std::vector<char> out;
    out.reserve(kFeatureHeaderBytes + 4 * tensor.data().size());
    out.insert(out.end(), {'F', 'U', 'N', 'F'});
    put_u32(out, kFeatureVersion);
    put_u32(out, checked_u32(tensor.n_images(), "n_images"));
    put_u32(out, checked_u32(tensor.n_patches(), "n_patches"));
    put_u32(out, checked_u32(tensor.dim(), "dim"));
    put_u32(out, checked_u32(tensor.grid_h(), "grid_h"));
    put_u32(out, checked_u32(tensor.grid_w(), "grid_w"));
    for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    write_all(path, out);
}

std::vector<ImageLabel> read_labels_file(const fs::path& path) {
    const auto bytes = read_all(path);
    expect_magic(bytes, "FUNL", path);
    if (bytes.size() < 8) throw TruncationError(path.string() + ": header truncated");
    const std::uint64_t n = get_u32(bytes, 4);
    expect_size(bytes, 8 + n, path);
    std::vector<ImageLabel> labels(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto v = static_cast<unsigned char>(bytes[8 + i]);
        if (v > 1) throw DataError(path.string() + ": label byte must be 0 or 1");
        labels[i] = static_cast<ImageLabel>(v);
    }
    return labels;
}

void write_labels_file(std::span<const ImageLabel> labels, const fs::path& path) {
    std::vector<char> out{'F', 'U', 'N', 'L'};
    put_u32(out, checked_u32(labels.size(), "n_images"));
    for (auto l : labels) out.push_back(static_cast<char>(l));
    write_all(path, out);
}

PixelMasks read_masks_file(const fs::path& path) {
    const auto bytes = read_all(path);
    expect_magic(bytes, "FUNM", path);
    if (bytes.size() < 16) throw TruncationError(path.string() + ": header truncated");
    PixelMasks m;
    m.n_images = get_u32(bytes, 4);
    m.height = get_u32(bytes, 8);
    m.width = get_u32(bytes, 12);
    const std::uint64_t count = static_cast<std::uint64_t>(m.n_images) * m.height * m.width;
    expect_size(bytes, 16 + count, path);
    m.data.resize(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto v = static_cast<unsigned char>(bytes[16 + k]);
        if (v > 1) throw DataError(path.string() + ": mask byte must be 0 or 1");
        m.data[k] = v;
    }
    return m;
}

void write_masks_file(const PixelMasks& masks, const fs::path& path) {
    if (masks.data.size() != masks.n_images * masks.height * masks.width) {
        throw ArgumentError("mask payload size mismatch");
    }
    std::vector<char> out{'F', 'U', 'N', 'M'};
    put_u32(out, checked_u32(masks.n_images, "n_images"));
    put_u32(out, checked_u32(masks.height, "height"));
    put_u32(out, checked_u32(masks.width, "width"));
    for (auto v : masks.data) out.push_back(static_cast<char>(v));
    write_all(path, out);
}

std::pair<FeatureTensor, DatasetManifest> load_features(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("file not found: " + path.string());
    FeatureTensor tensor = read_feature_file(path);
    DatasetManifest manifest;
    if (const auto lp = labels_path_for(path); fs::exists(lp)) manifest.image_labels = read_labels_file(lp);
    if (const auto mp = masks_path_for(path); fs::exists(mp)) {
        manifest.pixel_masks = read_masks_file(mp);
        manifest.image_h = manifest.pixel_masks->height;
        manifest.image_w = manifest.pixel_masks->width;
        const std::size_t gh = tensor.grid_h();
        const std::size_t gw = tensor.grid_w();
        if (gh > 0 && gw > 0 && *manifest.image_h % gh == 0 && *manifest.image_w % gw == 0 &&
            *manifest.image_h / gh == *manifest.image_w / gw) {
            manifest.patch_size = *manifest.image_h / gh;
        }
    }
    validate_manifest(tensor, manifest);
    return {std::move(tensor), std::move(manifest)};
}

void save_features(const FeatureTensor& tensor, const DatasetManifest& manifest, const fs::path& path) {
    validate_manifest(tensor, manifest);
    write_feature_file(tensor, path);
    if (manifest.image_labels) write_labels_file(*manifest.image_labels, labels_path_for(path));
    if (manifest.pixel_masks) write_masks_file(*manifest.pixel_masks, masks_path_for(path));
}

SyntheticGaussianConfig SyntheticGaussianConfig::motivation_default() {
    SyntheticGaussianConfig c;
    c.dim = 16;
    c.n_normal = 1000;
    c.n_anomaly = 1000;
    c.mu_normal.assign(16, 0.0);
    c.mu_anomaly.assign(16, 1.5);
    c.sigma_normal = 1.0;
    c.sigma_anomaly = std::sqrt(2.0);
    return c;
}

void SyntheticGaussianConfig::validate() const {
    if (dim == 0) throw ArgumentError("synthetic config: dim must be >= 1");
    if (n_normal + n_anomaly == 0) throw ArgumentError("synthetic config: no samples requested");
    if (patches_per_image == 0) throw ArgumentError("synthetic config: patches_per_image must be >= 1");
    if (!(sigma_normal > 0.0) || !(sigma_anomaly > 0.0)) {
        throw ArgumentError("synthetic config: sigmas must be positive");
    }
    if (!(patch_noise_sigma >= 0.0)) throw ArgumentError("synthetic config: patch_noise_sigma must be >= 0");
    if (!mu_normal.empty() && mu_normal.size() != dim) throw ArgumentError("synthetic config: mu_normal length");
    if (!mu_anomaly.empty() && mu_anomaly.size() != dim) {
        throw ArgumentError("synthetic config: mu_anomaly length");
    }
}

std::pair<std::size_t, std::size_t> default_grid(std::size_t n_patches) {
    std::size_t h = 1;
    for (std::size_t c = 1; c * c <= n_patches; ++c) {
        if (n_patches % c == 0) h = c;
    }
    return {h, n_patches / h};
}

std::pair<FeatureTensor, DatasetManifest> generate_synthetic(const SyntheticGaussianConfig& config) {
    config.validate();
    const std::size_t d = config.dim;
    const std::size_t p = config.patches_per_image;
    const std::size_t n = config.n_normal + config.n_anomaly;
    Rng rng(config.seed);
    std::vector<float> data;
    data.reserve(n * p * d);
    std::vector<ImageLabel> labels;
    labels.reserve(n);
    std::vector<double> centre(d);

    for (std::size_t i = 0; i < n; ++i) {
        const bool anomaly = i >= config.n_normal;
        const auto& mu = anomaly ? config.mu_anomaly : config.mu_normal;
        const double sigma = anomaly ? config.sigma_anomaly : config.sigma_normal;
        for (std::size_t k = 0; k < d; ++k) centre[k] = (mu.empty() ? 0.0 : mu[k]) + sigma * rng.normal();
        for (std::size_t j = 0; j < p; ++j) {
            for (std::size_t k = 0; k < d; ++k) {
                const double noise = p > 1 ? config.patch_noise_sigma * rng.normal() : 0.0;
                data.push_back(static_cast<float>(centre[k] + noise));
            }
        }
        labels.push_back(anomaly ? ImageLabel::Anomaly : ImageLabel::Normal);
    }
    const auto [gh, gw] = default_grid(p);
    DatasetManifest manifest;
    manifest.image_labels = std::move(labels);
    return {FeatureTensor(n, p, d, gh, gw, std::move(data)), std::move(manifest)};
}

ContaminatedSplit contaminate(const FeatureTensor& normal, const FeatureTensor& anomaly, double ratio,
                              std::uint64_t seed) {
    return contaminate(normal, DatasetManifest{}, anomaly, DatasetManifest{}, ratio, seed);
}

ContaminatedSplit contaminate(const FeatureTensor& normal, const DatasetManifest& normal_manifest,
                              const FeatureTensor& anomaly, const DatasetManifest& anomaly_manifest,
                              double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw ArgumentError("contaminate: ratio must lie in [0, 1)");
    if (anomaly.n_images() > 0 &&
        (normal.n_patches() != anomaly.n_patches() || normal.dim() != anomaly.dim() ||
         normal.grid_h() != anomaly.grid_h())) {
        throw ArgumentError("contaminate: normal and anomaly tensors have different shapes");
    }
    // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
    const auto wanted = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(normal.n_images()) + 1e-9));
    if (wanted > anomaly.n_images()) {
        throw ArgumentError("contaminate: need " + std::to_string(wanted) + " anomalies, only " +
                            std::to_string(anomaly.n_images()) + " available");
    }

    Rng rng(seed);
    ContaminatedSplit split;
    split.moved_anomalies = rng.sample_without_replacement(anomaly.n_images(), wanted);
    split.origin.reserve(normal.n_images() + wanted);
    for (std::size_t i = 0; i < normal.n_images(); ++i) split.origin.emplace_back(ImageLabel::Normal, i);
    for (std::size_t a : split.moved_anomalies) split.origin.emplace_back(ImageLabel::Anomaly, a);
    rng.shuffle(std::span(split.origin));

    const std::size_t block = normal.n_patches() * normal.dim();
    std::vector<float> data;
    data.reserve(split.origin.size() * block);
    std::vector<ImageLabel> labels;
    labels.reserve(split.origin.size());
    for (const auto& [label, idx] : split.origin) {
        auto src = label == ImageLabel::Normal ? normal.image(idx) : anomaly.image(idx);
        data.insert(data.end(), src.begin(), src.end());
        labels.push_back(label);
    }
    split.train = FeatureTensor(split.origin.size(), normal.n_patches(), normal.dim(), normal.grid_h(),
                                normal.grid_w(), std::move(data));
    split.truth.image_labels = std::move(labels);

    if (normal_manifest.pixel_masks && anomaly_manifest.pixel_masks) {
        const auto& nm = *normal_manifest.pixel_masks;
        const auto& am = *anomaly_manifest.pixel_masks;
        if (nm.height != am.height || nm.width != am.width) {
            throw ArgumentError("contaminate: mask dims differ between sources");
        }
        PixelMasks out{split.origin.size(), nm.height, nm.width, {}};
        out.data.reserve(out.n_images * out.height * out.width);
        for (const auto& [label, idx] : split.origin) {
            auto src = label == ImageLabel::Normal ? nm.mask(idx) : am.mask(idx);
            out.data.insert(out.data.end(), src.begin(), src.end());
        }
        split.truth.image_h = out.height;
        split.truth.image_w = out.width;
        split.truth.pixel_masks = std::move(out);
    }
    return split;
}

std::pair<FeatureTensor, FeatureTensor> split_by_label(const FeatureTensor& tensor,
                                                       std::span<const ImageLabel> labels) {
    if (labels.size() != tensor.n_images()) throw ArgumentError("split_by_label: label count mismatch");
    std::vector<std::size_t> normals, anomalies;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (labels[i] == ImageLabel::Normal ? normals : anomalies).push_back(i);
    }
    return {tensor.select(normals), tensor.select(anomalies)};
}

}  // namespace funad
