#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace funad {

enum class ImageLabel : std::uint8_t { Normal = 0, Anomaly = 1 };

/// Patch-level features of a set of images: n_images x n_patches x dim,
/// stored image-major, then patch-major, then dim-minor.
///
/// Immutable after construction; the constructor validates every invariant.
class FeatureTensor {
public:
    FeatureTensor() = default;
    FeatureTensor(std::size_t n_images, std::size_t n_patches, std::size_t dim, std::size_t grid_h,
                  std::size_t grid_w, std::vector<float> data);

    std::size_t n_images() const { return n_images_; }
    std::size_t n_patches() const { return n_patches_; }
    std::size_t dim() const { return dim_; }
    std::size_t grid_h() const { return grid_h_; }
    std::size_t grid_w() const { return grid_w_; }
    std::size_t total_patches() const { return n_images_ * n_patches_; }

    std::span<const float> data() const { return data_; }
    std::span<const float> image(std::size_t i) const;
    std::span<const float> patch(std::size_t i, std::size_t j) const;
    /// Patch by flat index i * n_patches + j.
    std::span<const float> row(std::size_t flat) const;

    /// New tensor holding the listed images, in the listed order.
    FeatureTensor select(std::span<const std::size_t> images) const;

    friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

private:
    std::size_t n_images_ = 0;
    std::size_t n_patches_ = 0;
    std::size_t dim_ = 0;
    std::size_t grid_h_ = 0;
    std::size_t grid_w_ = 0;
    std::vector<float> data_;
};

/// Binary per-pixel ground truth, one height x width mask per image.
struct PixelMasks {
    std::size_t n_images = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;  // n_images * height * width, values 0/1

    std::span<const std::uint8_t> mask(std::size_t i) const {
        return std::span<const std::uint8_t>(data).subspan(i * height * width, height * width);
    }
    friend bool operator==(const PixelMasks&, const PixelMasks&) = default;
};

/// Optional ground truth and geometry that accompany a feature tensor.
struct DatasetManifest {
    std::optional<std::vector<ImageLabel>> image_labels;
    std::optional<PixelMasks> pixel_masks;
    std::optional<std::size_t> image_h;
    std::optional<std::size_t> image_w;
    std::optional<std::size_t> patch_size;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Checks manifest fields against the tensor they describe. Throws DataError.
void validate_manifest(const FeatureTensor& tensor, const DatasetManifest& manifest);

/// Sibling paths for labels and masks: same stem, extensions .funl / .funm.
std::filesystem::path labels_path_for(const std::filesystem::path& features);
std::filesystem::path masks_path_for(const std::filesystem::path& features);

FeatureTensor read_feature_file(const std::filesystem::path& path);
void write_feature_file(const FeatureTensor& tensor, const std::filesystem::path& path);
std::vector<ImageLabel> read_labels_file(const std::filesystem::path& path);
void write_labels_file(std::span<const ImageLabel> labels, const std::filesystem::path& path);
PixelMasks read_masks_file(const std::filesystem::path& path);
void write_masks_file(const PixelMasks& masks, const std::filesystem::path& path);

/// Loads a FUNF file plus any sibling FUNL/FUNM files.
std::pair<FeatureTensor, DatasetManifest> load_features(const std::filesystem::path& path);

/// Writes FUNF, and FUNL/FUNM siblings when the manifest carries labels/masks.
void save_features(const FeatureTensor& tensor, const DatasetManifest& manifest,
                   const std::filesystem::path& path);

/// Two isotropic Gaussian classes, sampled as whole images.
struct SyntheticGaussianConfig {
    std::size_t dim = 16;
    std::size_t n_normal = 1000;
    std::size_t n_anomaly = 1000;
    std::vector<double> mu_normal;   // empty means all zeros
    std::vector<double> mu_anomaly;  // empty means all zeros
    double sigma_normal = 1.0;
    double sigma_anomaly = 1.0;
    std::size_t patches_per_image = 1;
    /// Std of the per-patch noise added around the per-image draw when
    /// patches_per_image > 1.
    double patch_noise_sigma = 0.1;
    std::uint64_t seed = 0;

    /// 16-dim, 1000 + 1000, N(0, I) versus N(1.5 * 1, 2 I).
    static SyntheticGaussianConfig motivation_default();
    void validate() const;
};

/// Normals first, then anomalies, with labels in the manifest.
std::pair<FeatureTensor, DatasetManifest> generate_synthetic(const SyntheticGaussianConfig& config);

/// Result of mixing anomalies into a normal set.
struct ContaminatedSplit {
    FeatureTensor train;         // unlabeled
    DatasetManifest truth;       // evaluation-only labels (and masks if given)
    std::vector<std::size_t> moved_anomalies;  // indices into the anomaly tensor
    /// For each train image: (label, index into its source tensor).
    std::vector<std::pair<ImageLabel, std::size_t>> origin;
};

/// All normals plus floor(ratio * n_normal) anomalies drawn without
/// replacement, shuffled. Throws ArgumentError when too few anomalies exist.
ContaminatedSplit contaminate(const FeatureTensor& normal, const FeatureTensor& anomaly, double ratio,
                              std::uint64_t seed);

/// As above, carrying pixel masks into the truth manifest when both sources have them.
ContaminatedSplit contaminate(const FeatureTensor& normal, const DatasetManifest& normal_manifest,
                              const FeatureTensor& anomaly, const DatasetManifest& anomaly_manifest,
                              double ratio, std::uint64_t seed);

/// Splits a labeled tensor into (normals, anomalies).
std::pair<FeatureTensor, FeatureTensor> split_by_label(const FeatureTensor& tensor,
                                                       std::span<const ImageLabel> labels);

/// Near-square factorization of a patch count into (grid_h, grid_w).
std::pair<std::size_t, std::size_t> default_grid(std::size_t n_patches);

}  // namespace funad
