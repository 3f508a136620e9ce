#include "cebm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <sstream>

#include "cebm/errors.hpp"

namespace cebm::data {

// --- Dataset ----------------------------------------------------------------

Dataset::Dataset(Tensor images, std::vector<int> labels, std::size_t num_classes, std::string name,
                 std::string split)
    : images_(std::move(images)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      name_(std::move(name)),
      split_(std::move(split)) {
  if (images_.rank() != 4) throw std::invalid_argument("dataset images must be [N, C, H, W]");
  if (labels_.empty()) throw std::invalid_argument("dataset must be non-empty");
  if (images_.dim(0) != labels_.size()) {
    throw std::invalid_argument("dataset has " + std::to_string(images_.dim(0)) + " images but " +
                                std::to_string(labels_.size()) + " labels");
  }
  for (double v : images_.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("dataset pixel outside [0, 1]");
  }
  for (int l : labels_) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes_) {
      throw std::invalid_argument("dataset label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(num_classes_) + ")");
    }
  }
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  const std::size_t item = images_.size() / labels_.size();
  Shape shape = images_.shape();
  shape[0] = indices.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= labels_.size()) throw std::out_of_range("dataset index out of range");
    const auto src = images_.data().subspan(indices[i] * item, item);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * item));
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices, std::string split) const {
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) labels.push_back(labels_.at(i));
  return Dataset(gather(indices), std::move(labels), num_classes_, name_, std::move(split));
}

Dataset Dataset::filter_labels(std::span<const int> keep, std::string split) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (std::find(keep.begin(), keep.end(), labels_[i]) != keep.end()) idx.push_back(i);
  }
  return subset(idx, std::move(split));
}

// --- synthetic generators ---------------------------------------------------

SyntheticKind synthetic_kind_from_string(const std::string& name) {
  if (name == "two_moons_raster") return SyntheticKind::two_moons_raster;
  if (name == "gaussian_grid_raster") return SyntheticKind::gaussian_grid_raster;
  if (name == "bar_patterns") return SyntheticKind::bar_patterns;
  throw std::invalid_argument("unknown synthetic kind '" + name + "'");
}

const char* to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::two_moons_raster: return "two_moons_raster";
    case SyntheticKind::gaussian_grid_raster: return "gaussian_grid_raster";
    case SyntheticKind::bar_patterns: return "bar_patterns";
  }
  return "unknown";
}

double bar_angle(int c) {
  if (c < 0 || static_cast<std::size_t>(c) >= kMaxBarClasses) {
    throw std::invalid_argument("bar class " + std::to_string(c) + " out of range");
  }
  const double quarter = std::numbers::pi / 4.0;
  return c < 4 ? c * quarter : (c - 4) * quarter + quarter / 2.0;
}

namespace {

void add_pixel_noise(std::span<double> img, double noise, Rng& rng) {
  for (double& v : img) {
    if (noise > 0.0) v += noise * rng.normal();
    v = std::clamp(v, 0.0, 1.0);
  }
}

void render_bar(std::span<double> img, std::size_t size, double angle, double offset, double shift,
                double half_length, double half_width) {
  const double centre = 0.5 * static_cast<double>(size - 1);
  const double dx = std::cos(angle), dy = std::sin(angle);
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const double x = static_cast<double>(c) - centre;
      const double y = centre - static_cast<double>(r);
      const double along = x * dx + y * dy - shift;
      const double across = -x * dy + y * dx - offset;
      // One-pixel soft edge on both ends and sides.
      const double side = std::clamp(half_width + 0.5 - std::abs(across), 0.0, 1.0);
      const double end = std::clamp(half_length + 0.5 - std::abs(along), 0.0, 1.0);
      img[r * size + c] = side * end;
    }
}

void render_blob(std::span<double> img, std::size_t size, double px, double py, double sigma) {
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const double d2 = (static_cast<double>(c) - px) * (static_cast<double>(c) - px) +
                        (static_cast<double>(r) - py) * (static_cast<double>(r) - py);
      img[r * size + c] = std::exp(-d2 / (2.0 * sigma * sigma));
    }
}

}  // namespace

Dataset gen_synthetic(SyntheticKind kind, const SyntheticSpec& spec, Rng& rng, const std::string& split) {
  if (spec.image_size < 4) throw std::invalid_argument("image_size must be at least 4");
  if (spec.n_per_class < 1) throw std::invalid_argument("n_per_class must be at least 1");
  if (spec.num_classes < 1) throw std::invalid_argument("num_classes must be at least 1");
  if (spec.pixel_noise < 0.0 || spec.jitter < 0.0) throw std::invalid_argument("noise levels must be non-negative");
  std::vector<int> classes = spec.classes;
  if (classes.empty()) {
    for (std::size_t c = 0; c < spec.num_classes; ++c) classes.push_back(static_cast<int>(c));
  }
  if (kind == SyntheticKind::two_moons_raster && spec.num_classes != 2) {
    throw std::invalid_argument("two_moons_raster has exactly 2 classes");
  }
  if (kind == SyntheticKind::bar_patterns && spec.num_classes > kMaxBarClasses) {
    throw std::invalid_argument("bar_patterns supports at most 8 classes");
  }
  for (int c : classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= spec.num_classes) {
      throw std::invalid_argument("requested class outside num_classes");
    }
  }

  const std::size_t s = spec.image_size;
  const std::size_t n = classes.size() * spec.n_per_class;
  Tensor images({n, 1, s, s});
  std::vector<int> labels;
  labels.reserve(n);
  const double sd = static_cast<double>(s);
  const std::size_t grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(spec.num_classes))));

  std::size_t idx = 0;
  for (int c : classes) {
    for (std::size_t i = 0; i < spec.n_per_class; ++i, ++idx) {
      auto img = images.data().subspan(idx * s * s, s * s);
      switch (kind) {
        case SyntheticKind::bar_patterns: {
          const double offset = spec.jitter > 0.0 ? rng.uniform(-1.0, 1.0) * spec.jitter * sd / 4.0 : 0.0;
          const double shift = spec.jitter > 0.0 ? rng.uniform(-1.0, 1.0) * spec.jitter * sd / 8.0 : 0.0;
          const double length_scale = spec.jitter > 0.0 ? 1.0 + rng.uniform(-0.5, 0.5) * spec.jitter : 1.0;
          render_bar(img, s, bar_angle(c), offset, shift, 0.3 * sd * length_scale, 0.08 * sd);
          break;
        }
        case SyntheticKind::gaussian_grid_raster: {
          const auto gc = static_cast<std::size_t>(c);
          const double cu = 0.2 + 0.6 * (static_cast<double>(gc % grid) + 0.5) / static_cast<double>(grid);
          const double cv = 0.2 + 0.6 * (static_cast<double>(gc / grid) + 0.5) / static_cast<double>(grid);
          const double u = std::clamp(cu + spec.jitter * rng.normal(), 0.0, 1.0);
          const double v = std::clamp(cv + spec.jitter * rng.normal(), 0.0, 1.0);
          for (std::size_t r = 0; r < s; ++r)
            for (std::size_t col = 0; col < s; ++col) img[r * s + col] = col < s / 2 ? u : v;
          break;
        }
        case SyntheticKind::two_moons_raster: {
          const double t = rng.uniform(0.0, std::numbers::pi);
          double x = c == 0 ? std::cos(t) : 1.0 - std::cos(t);
          double y = c == 0 ? std::sin(t) : 0.5 - std::sin(t);
          if (spec.jitter > 0.0) {
            x += spec.jitter * rng.normal();
            y += spec.jitter * rng.normal();
          }
          const double px = (x + 1.2) / 3.4 * (sd - 1.0);
          const double py = (1.2 - y) / 2.4 * (sd - 1.0);
          render_blob(img, s, px, py, sd / 10.0);
          break;
        }
      }
      add_pixel_noise(img, spec.pixel_noise, rng);
      labels.push_back(c);
    }
  }
  return Dataset(std::move(images), std::move(labels), spec.num_classes, to_string(kind), split);
}

Dataset constant_images(std::size_t count, const Shape& image_shape) {
  if (count == 0) throw std::invalid_argument("constant_images: count must be positive");
  Shape shape = image_shape;
  shape.insert(shape.begin(), count);
  Tensor images(shape);
  const std::size_t item = shape_size(image_shape);
  for (std::size_t i = 0; i < count; ++i) {
    const double v = count == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(count - 1);
    std::fill_n(images.data().begin() + static_cast<std::ptrdiff_t>(i * item), item, v);
  }
  return Dataset(std::move(images), std::vector<int>(count, 0), 1, "constant", "ood");
}

// --- IDX --------------------------------------------------------------------

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::io_failure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw FormatError(FormatErrorKind::io_failure, "read failure on " + path.string());
  return bytes;
}

namespace {

class BigEndianReader {
 public:
  BigEndianReader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }
  std::span<const std::uint8_t> take(std::uint64_t count) {
    need(count);
    auto out = bytes_.subspan(pos_, static_cast<std::size_t>(count));
    pos_ += static_cast<std::size_t>(count);
    return out;
  }

 private:
  void need(std::uint64_t count) const {
    if (count > bytes_.size() - pos_) {
      throw FormatError(FormatErrorKind::truncated,
                        std::string(what_) + ": truncated at byte offset " + std::to_string(pos_),
                        static_cast<std::int64_t>(pos_));
    }
  }
  std::span<const std::uint8_t> bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

std::string hex32(std::uint32_t v) {
  std::ostringstream out;
  out << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return out.str();
}

}  // namespace

std::vector<double> area_downscale(std::span<const double> plane, std::size_t height,
                                   std::size_t width, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0 || out_h > height || out_w > width) {
    throw std::invalid_argument("area_downscale: target must be positive and no larger than the source");
  }
  // Overlap weights of source cells [i, i+1) with target cell [j, j+1) * ratio.
  auto weights = [](std::size_t in, std::size_t out) {
    std::vector<std::vector<std::pair<std::size_t, double>>> w(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t j = 0; j < out; ++j) {
      const double lo = static_cast<double>(j) * ratio, hi = lo + ratio;
      for (auto i = static_cast<std::size_t>(std::floor(lo)); i < in && static_cast<double>(i) < hi; ++i) {
        const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
        if (overlap > 0.0) w[j].emplace_back(i, overlap / ratio);
      }
    }
    return w;
  };
  const auto wr = weights(height, out_h);
  const auto wc = weights(width, out_w);
  std::vector<double> out(out_h * out_w, 0.0);
  for (std::size_t r = 0; r < out_h; ++r)
    for (std::size_t c = 0; c < out_w; ++c) {
      double acc = 0.0;
      for (const auto& [ri, rw] : wr[r])
        for (const auto& [ci, cw] : wc[c]) acc += rw * cw * plane[ri * width + ci];
      out[r * out_w + c] = std::clamp(acc, 0.0, 1.0);
    }
  return out;
}

Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                  std::optional<std::size_t> target_size, const std::string& name) {
  BigEndianReader img(image_bytes, "IDX images");
  const std::uint32_t img_magic = img.u32();
  if (img_magic != 0x00000803u) {
    throw FormatError(FormatErrorKind::bad_magic,
                      "IDX images: expected magic 0x00000803, observed " + hex32(img_magic), 0);
  }
  const std::uint32_t n = img.u32();
  const std::uint32_t rows = img.u32();
  const std::uint32_t cols = img.u32();
  if (n == 0 || rows == 0 || cols == 0) {
    throw FormatError(FormatErrorKind::invalid_value, "IDX images: zero extent in header", 4);
  }
  const std::uint64_t pixels = static_cast<std::uint64_t>(rows) * cols;
  if (pixels > image_bytes.size() || n > image_bytes.size() / pixels) {
    throw FormatError(FormatErrorKind::truncated,
                      "IDX images: header promises more pixels than the file holds", 16);
  }
  const auto payload = img.take(static_cast<std::uint64_t>(n) * pixels);

  BigEndianReader lab(label_bytes, "IDX labels");
  const std::uint32_t lab_magic = lab.u32();
  if (lab_magic != 0x00000801u) {
    throw FormatError(FormatErrorKind::bad_magic,
                      "IDX labels: expected magic 0x00000801, observed " + hex32(lab_magic), 0);
  }
  const std::uint32_t n_labels = lab.u32();
  if (n_labels != n) {
    throw FormatError(FormatErrorKind::count_mismatch,
                      "IDX count mismatch: " + std::to_string(n) + " images vs " +
                          std::to_string(n_labels) + " labels");
  }
  const auto label_payload = lab.take(n_labels);

  std::size_t out_size_h = rows, out_size_w = cols;
  if (target_size) {
    if (*target_size == 0 || *target_size > std::min(rows, cols)) {
      throw FormatError(FormatErrorKind::invalid_value, "IDX target size larger than source images");
    }
    out_size_h = out_size_w = *target_size;
  }
  Tensor images({n, 1, out_size_h, out_size_w});
  std::vector<double> plane(pixels);
  const std::size_t side = std::min(rows, cols);
  const std::size_t top = (rows - side) / 2, left = (cols - side) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) plane[p] = payload[i * pixels + p] / 255.0;
    auto dst = images.data().subspan(i * out_size_h * out_size_w, out_size_h * out_size_w);
    if (!target_size) {
      std::copy(plane.begin(), plane.end(), dst.begin());
      continue;
    }
    std::vector<double> square(side * side);
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) square[r * side + c] = plane[(top + r) * cols + left + c];
    const auto scaled = area_downscale(square, side, side, out_size_h, out_size_w);
    std::copy(scaled.begin(), scaled.end(), dst.begin());
  }
  std::vector<int> labels(label_payload.begin(), label_payload.end());
  const int max_label = *std::max_element(labels.begin(), labels.end());
  return Dataset(std::move(images), std::move(labels), static_cast<std::size_t>(max_label) + 1, name, "idx");
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::optional<std::size_t> target_size) {
  const auto image_bytes = read_file_bytes(images_path);
  const auto label_bytes = read_file_bytes(labels_path);
  return parse_idx(image_bytes, label_bytes, target_size, images_path.stem().string());
}

}  // namespace cebm::data
