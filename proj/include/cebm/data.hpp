#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cebm/rng.hpp"
#include "cebm/tensor.hpp"

namespace cebm::data {

// Images [N, C, H, W] with pixels in [0, 1] and labels in [0, num_classes).
class Dataset {
 public:
  // Validates range, label bounds and non-emptiness; throws std::invalid_argument.
  Dataset(Tensor images, std::vector<int> labels, std::size_t num_classes, std::string name,
          std::string split);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  Shape image_shape() const { return {images_.dim(1), images_.dim(2), images_.dim(3)}; }
  const Tensor& images() const noexcept { return images_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::string& name() const noexcept { return name_; }
  const std::string& split() const noexcept { return split_; }

  Tensor gather(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices, std::string split) const;
  // Keeps examples whose label is in `keep`; labels are preserved.
  Dataset filter_labels(std::span<const int> keep, std::string split) const;

 private:
  Tensor images_;
  std::vector<int> labels_;
  std::size_t num_classes_;
  std::string name_;
  std::string split_;
};

enum class SyntheticKind { two_moons_raster, gaussian_grid_raster, bar_patterns };

SyntheticKind synthetic_kind_from_string(const std::string& name);
const char* to_string(SyntheticKind kind);

struct SyntheticSpec {
  std::size_t n_per_class = 100;
  std::size_t image_size = 12;
  std::size_t num_classes = 4;
  // Per-pixel Gaussian noise standard deviation (pixels clamped to [0, 1]).
  double pixel_noise = 0.0;
  // Geometric variation: bar offset/length jitter, cluster spread, moon jitter.
  double jitter = 0.0;
  // Class indices to render; empty means 0 .. num_classes-1.
  std::vector<int> classes;
};

// Maximum number of distinct bar orientations.
inline constexpr std::size_t kMaxBarClasses = 8;

// Orientation of bar class c in radians: 0, 45, 90, 135 degrees for the first
// four classes, then the half-way angles 22.5, 67.5, ... for classes 4-7.
double bar_angle(int c);

// Deterministic given the stream. Examples are ordered class by class.
Dataset gen_synthetic(SyntheticKind kind, const SyntheticSpec& spec, Rng& rng,
                      const std::string& split = "train");

// Constant images with intensities evenly spaced in [0, 1].
Dataset constant_images(std::size_t count, const Shape& image_shape);

// IDX ubyte rasters (magic 0x00000803) and labels (0x00000801). When
// `target_size` is given, images are centre-cropped to a square and
// area-averaged down to target_size x target_size.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::optional<std::size_t> target_size = std::nullopt);
Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                  std::optional<std::size_t> target_size = std::nullopt, const std::string& name = "idx");

// Area-averaging resample of one channel plane.
std::vector<double> area_downscale(std::span<const double> plane, std::size_t height,
                                   std::size_t width, std::size_t out_h, std::size_t out_w);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace cebm::data
