#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cebm/tensor.hpp"

namespace cebm::io {

// Binary PGM (1 channel, P5) or PPM (3 channels, P6) holding `batch`
// [N, C, H, W] as a tile grid of `grid_cols` columns, 8-bit, with a single
// comment line after the magic. Pixels are clamped to [0, 1] and rounded.
std::vector<std::uint8_t> encode_sample_grid(const Tensor& batch, std::size_t grid_cols,
                                             const std::string& comment);

void export_samples(const std::filesystem::path& path, const Tensor& batch, std::size_t grid_cols,
                    const std::string& comment);

}  // namespace cebm::io
