#include "cebm/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cebm/errors.hpp"

namespace cebm::io {

std::vector<std::uint8_t> encode_sample_grid(const Tensor& batch, std::size_t grid_cols,
                                             const std::string& comment) {
  if (batch.rank() != 4) throw ShapeError("sample grid expects [N, C, H, W], got " + shape_string(batch.shape()));
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  if (c != 1 && c != 3) throw ShapeError("sample grid supports 1 or 3 channels");
  if (n == 0 || grid_cols == 0) throw std::invalid_argument("sample grid needs samples and grid_cols > 0");
  if (comment.find('\n') != std::string::npos) throw std::invalid_argument("comment must be a single line");
  const std::size_t rows = (n + grid_cols - 1) / grid_cols;
  const std::size_t width = grid_cols * w, height = rows * h;

  std::string header = (c == 1 ? "P5\n" : "P6\n");
  header += "# " + comment + "\n";
  header += std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t payload_start = out.size();
  out.resize(payload_start + width * height * c, 0);

  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t tile_r = s / grid_cols, tile_c = s % grid_cols;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double v = std::clamp(batch[((s * c + ch) * h + y) * w + x], 0.0, 1.0);
          const std::size_t py = tile_r * h + y, px = tile_c * w + x;
          out[payload_start + (py * width + px) * c + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
  }
  return out;
}

void export_samples(const std::filesystem::path& path, const Tensor& batch, std::size_t grid_cols,
                    const std::string& comment) {
  const auto bytes = encode_sample_grid(batch, grid_cols, comment);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::io_failure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::io_failure, "write failure on " + path.string());
}

}  // namespace cebm::io
