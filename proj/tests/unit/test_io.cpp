#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cebm/checkpoint.hpp"
#include "cebm/data.hpp"
#include "cebm/errors.hpp"
#include "cebm/image_io.hpp"
#include "cebm/model.hpp"
#include "support/oracles.hpp"

using namespace cebm;
namespace fs = std::filesystem;

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

// Four 2x3 images with pixel value 10 * image + position, labels 0..3.
std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> idx_fixture() {
  std::vector<std::uint8_t> img, lab;
  put_u32_be(img, 0x00000803);
  put_u32_be(img, 4);
  put_u32_be(img, 2);
  put_u32_be(img, 3);
  for (std::uint8_t i = 0; i < 4; ++i)
    for (std::uint8_t p = 0; p < 6; ++p) img.push_back(static_cast<std::uint8_t>(10 * i + p));
  put_u32_be(lab, 0x00000801);
  put_u32_be(lab, 4);
  for (std::uint8_t i = 0; i < 4; ++i) lab.push_back(i);
  return {img, lab};
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cebm_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

model::CebmModel tiny_model(std::uint64_t seed) {
  Rng rng(seed);
  return model::CebmModel(model::EncoderConfig::conv_small(1, 6, 6, 2, 5, 3),
                          expfam::GaussianNaturalParams::standard(3), 1.0, rng);
}

std::vector<std::uint8_t> mutate(std::vector<std::uint8_t> bytes, Rng& rng) {
  switch (rng.below(4)) {
    case 0:
      bytes.resize(rng.below(bytes.size() + 1));
      break;
    case 1:
      for (int i = 0; i < 3 && !bytes.empty(); ++i) bytes[rng.below(bytes.size())] = static_cast<std::uint8_t>(rng.below(256));
      break;
    case 2: {
      // Overwrite a 4-byte window near the front, where the length fields live.
      const std::size_t at = rng.below(std::min<std::size_t>(bytes.size(), 64));
      for (std::size_t i = at; i < std::min(bytes.size(), at + 4); ++i) bytes[i] = static_cast<std::uint8_t>(rng.below(256));
      break;
    }
    default:
      bytes.insert(bytes.begin() + static_cast<std::ptrdiff_t>(rng.below(bytes.size() + 1)),
                   static_cast<std::uint8_t>(rng.below(256)));
  }
  return bytes;
}

}  // namespace

TEST(Synthetic, BalancedCounts) {
  Rng rng(1);
  data::SyntheticSpec spec;
  spec.n_per_class = 10;
  spec.num_classes = 2;
  for (auto kind : {data::SyntheticKind::bar_patterns, data::SyntheticKind::gaussian_grid_raster,
                    data::SyntheticKind::two_moons_raster}) {
    const auto ds = data::gen_synthetic(kind, spec, rng);
    ASSERT_EQ(ds.size(), 20u);
    EXPECT_EQ(std::count(ds.labels().begin(), ds.labels().end(), 0), 10);
    EXPECT_EQ(std::count(ds.labels().begin(), ds.labels().end(), 1), 10);
  }
}

TEST(Synthetic, NoiselessBarsIdenticalWithinClass) {
  Rng rng(2);
  data::SyntheticSpec spec;
  spec.n_per_class = 5;
  const auto ds = data::gen_synthetic(data::SyntheticKind::bar_patterns, spec, rng);
  const std::size_t px = 12 * 12;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t first = (i / 5) * 5;
    for (std::size_t p = 0; p < px; ++p) EXPECT_EQ(ds.images()[i * px + p], ds.images()[first * px + p]);
  }
  // Different orientations differ.
  bool differ = false;
  for (std::size_t p = 0; p < px; ++p) differ |= ds.images()[p] != ds.images()[5 * px + p];
  EXPECT_TRUE(differ);
}

TEST(Synthetic, SeedDeterministic) {
  data::SyntheticSpec spec;
  spec.pixel_noise = 0.2;
  spec.jitter = 1.0;
  Rng a(9), b(9);
  const auto da = data::gen_synthetic(data::SyntheticKind::bar_patterns, spec, a);
  const auto db = data::gen_synthetic(data::SyntheticKind::bar_patterns, spec, b);
  EXPECT_EQ(da.images(), db.images());
  EXPECT_EQ(da.labels(), db.labels());
}

TEST(Synthetic, GaussianGridCentresRecovered) {
  Rng rng(3);
  data::SyntheticSpec spec;
  spec.n_per_class = 400;
  spec.num_classes = 4;
  spec.jitter = 0.05;
  spec.image_size = 4;
  const auto ds = data::gen_synthetic(data::SyntheticKind::gaussian_grid_raster, spec, rng);
  // Classes on a 2x2 grid of cells spanning [0.2, 0.8] in each coordinate.
  const double centres[2] = {0.35, 0.65};
  const double tol = 3.0 * spec.jitter / std::sqrt(400.0);
  for (int c = 0; c < 4; ++c) {
    double u = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 400; ++i) {
      const std::size_t base = (static_cast<std::size_t>(c) * 400 + i) * 16;
      u += ds.images()[base + 0];
      v += ds.images()[base + 3];
    }
    EXPECT_NEAR(u / 400.0, centres[c % 2], tol) << "class " << c;
    EXPECT_NEAR(v / 400.0, centres[c / 2], tol) << "class " << c;
  }
}

TEST(Synthetic, RejectsBadSpecs) {
  Rng rng(4);
  data::SyntheticSpec spec;
  spec.image_size = 3;
  EXPECT_THROW(data::gen_synthetic(data::SyntheticKind::bar_patterns, spec, rng), std::invalid_argument);
  spec = {};
  spec.n_per_class = 0;
  EXPECT_THROW(data::gen_synthetic(data::SyntheticKind::bar_patterns, spec, rng), std::invalid_argument);
  spec = {};
  spec.num_classes = 9;
  EXPECT_THROW(data::gen_synthetic(data::SyntheticKind::bar_patterns, spec, rng), std::invalid_argument);
  EXPECT_THROW(data::synthetic_kind_from_string("spirals"), std::invalid_argument);
}

TEST(DatasetTest, EnforcesInvariants) {
  EXPECT_THROW(data::Dataset(Tensor({1, 1, 1, 1}, {1.5}), {0}, 1, "x", "train"), std::invalid_argument);
  EXPECT_THROW(data::Dataset(Tensor({1, 1, 1, 1}, {0.5}), {2}, 2, "x", "train"), std::invalid_argument);
  EXPECT_THROW(data::Dataset(Tensor({0, 1, 1, 1}), {}, 1, "x", "train"), std::invalid_argument);
  EXPECT_THROW(data::Dataset(Tensor({2, 1, 1, 1}), {0}, 1, "x", "train"), std::invalid_argument);
  const auto c = data::constant_images(5, {1, 2, 2});
  EXPECT_EQ(c.size(), 5u);
  EXPECT_EQ(c.images()[0], 0.0);
  EXPECT_EQ(c.images()[4 * 4], 1.0);
}

TEST(Idx, WellFormedFixture) {
  const auto [img, lab] = idx_fixture();
  const auto ds = data::parse_idx(img, lab);
  ASSERT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.image_shape(), (Shape{1, 2, 3}));
  EXPECT_EQ(ds.labels(), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(ds.images()[6 * 2 + 4], 24.0 / 255.0);

  const fs::path dir = temp_dir("idx");
  std::ofstream(dir / "img", std::ios::binary).write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
  std::ofstream(dir / "lab", std::ios::binary).write(reinterpret_cast<const char*>(lab.data()), static_cast<std::streamsize>(lab.size()));
  const auto loaded = data::load_idx(dir / "img", dir / "lab");
  EXPECT_EQ(loaded.images(), ds.images());
}

TEST(Idx, DistinctErrors) {
  auto [img, lab] = idx_fixture();
  auto bad = img;
  bad[3] = 0x02;
  try {
    data::parse_idx(bad, lab);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::bad_magic);
    EXPECT_NE(std::string(e.what()).find("0x00000802"), std::string::npos);
  }
  auto short_lab = lab;
  short_lab[7] = 3;
  short_lab.pop_back();
  try {
    data::parse_idx(img, short_lab);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::count_mismatch);
  }
  auto truncated = img;
  truncated.resize(truncated.size() - 1);
  try {
    data::parse_idx(truncated, lab);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::truncated);
  }
  EXPECT_THROW(data::load_idx("/nonexistent/img", "/nonexistent/lab"), FormatError);
}

TEST(Idx, CropAndAreaDownscale) {
  auto [img, lab] = idx_fixture();
  const auto ds = data::parse_idx(img, lab, 1);
  // Centre 2x2 crop of a 2x3 image is columns 0-1 (offset (3-2)/2 = 0), then averaged.
  for (std::size_t i = 0; i < 4; ++i) {
    const double expect = (4.0 * 10.0 * static_cast<double>(i) + 0 + 1 + 3 + 4) / 4.0 / 255.0;
    EXPECT_NEAR(ds.images()[i], expect, 1e-15);
  }
  const std::vector<double> plane{0, 1, 0, 1, 0, 1, 0, 1, 0};
  const auto down = data::area_downscale(plane, 3, 3, 2, 2);
  // Each output cell covers 1.5 x 1.5 source cells.
  const double centre_weight = 0.25 / 2.25, edge_weight = 0.5 / 2.25;
  EXPECT_NEAR(down[0], 2.0 * edge_weight + 0.0 * centre_weight, 1e-15);
}

TEST(Idx, FuzzedHeadersGiveTypedErrors) {
  const auto [img, lab] = idx_fixture();
  Rng rng(77);
  for (int trial = 0; trial < 3000; ++trial) {
    const bool images = trial % 2 == 0;
    const auto a = images ? mutate(img, rng) : img;
    const auto b = images ? lab : mutate(lab, rng);
    try {
      const auto ds = data::parse_idx(a, b);
      EXPECT_GT(ds.size(), 0u);
    } catch (const FormatError&) {
    }
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto m = tiny_model(5);
  const auto ckpt = io::make_checkpoint(m, 42, "rng-state", "[run]\nseed = 1\n");
  const fs::path path = temp_dir("ckpt") / "m.cebm";
  io::save_checkpoint(path, ckpt);
  const auto loaded = io::load_checkpoint(path);
  EXPECT_EQ(loaded.step, 42u);
  EXPECT_EQ(loaded.model_kind, "cebm");
  EXPECT_EQ(loaded.rng_state, "rng-state");
  EXPECT_EQ(loaded.config_echo, "[run]\nseed = 1\n");
  ASSERT_EQ(loaded.params.size(), m.params().size());
  auto other = tiny_model(6);
  io::restore_parameters(other, loaded);
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    const auto& a = m.params()[i].value.values();
    const auto& b = other.params()[i].value.values();
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0) << m.params()[i].name;
  }
  EXPECT_EQ(io::encode_checkpoint(loaded), io::encode_checkpoint(ckpt));
}

TEST(Checkpoint, TruncationAndVersionErrors) {
  const auto bytes = io::encode_checkpoint(io::make_checkpoint(tiny_model(1), 0, "", ""));
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 50);
  try {
    io::decode_checkpoint(cut);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::truncated);
    EXPECT_GE(e.offset(), 0);
    EXPECT_LE(e.offset(), 50);
  }
  auto newer = bytes;
  newer[4] = static_cast<std::uint8_t>(io::kCheckpointVersion + 1);
  try {
    io::decode_checkpoint(newer);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::unsupported_version);
  }
  auto magic = bytes;
  magic[0] = 'X';
  try {
    io::decode_checkpoint(magic);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::bad_magic);
  }
  EXPECT_THROW(io::load_checkpoint("/nonexistent/x.cebm"), FormatError);
}

TEST(Checkpoint, DuplicateNamesRejected) {
  io::Checkpoint ckpt;
  ckpt.model_kind = "cebm";
  ckpt.params = {{"w", Tensor::vector({1.0})}, {"w", Tensor::vector({2.0})}};
  try {
    io::decode_checkpoint(io::encode_checkpoint(ckpt));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::duplicate_name);
  }
}

TEST(Checkpoint, RestoreRejectsMismatch) {
  auto m = tiny_model(1);
  auto ckpt = io::make_checkpoint(m, 0, "", "");
  ckpt.params.front().value = Tensor::vector({1.0, 2.0});
  EXPECT_THROW(io::restore_parameters(m, ckpt), FormatError);
  ckpt.params.erase(ckpt.params.begin());
  EXPECT_THROW(io::restore_parameters(m, ckpt), FormatError);
}

TEST(Checkpoint, FuzzedBytesGiveTypedErrors) {
  const auto bytes = io::encode_checkpoint(io::make_checkpoint(tiny_model(2), 3, "state", "echo"));
  Rng rng(78);
  for (int trial = 0; trial < 3000; ++trial) {
    try {
      io::decode_checkpoint(mutate(bytes, rng));
    } catch (const FormatError&) {
    }
  }
}

TEST(SampleGrid, TileGeometryAndRoundTrip) {
  Rng rng(3);
  Tensor batch({4, 1, 3, 5});
  for (double& v : batch.data()) v = rng.uniform(-0.2, 1.2);
  const auto bytes = io::encode_sample_grid(batch, 2, "step=7 seed=3");
  const auto pnm = oracle::read_pnm(bytes);
  EXPECT_EQ(pnm.magic, "P5");
  EXPECT_EQ(pnm.comment, " step=7 seed=3");
  EXPECT_EQ(pnm.width, 10u);
  EXPECT_EQ(pnm.height, 6u);
  EXPECT_EQ(pnm.maxval, 255u);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 5; ++x) {
        const double v = std::min(1.0, std::max(0.0, batch[(s * 3 + y) * 5 + x]));
        const auto expect = static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
        EXPECT_EQ(pnm.pixels[((s / 2) * 3 + y) * 10 + (s % 2) * 5 + x], expect);
      }
}

TEST(SampleGrid, ZerosAreBlackAndColourIsPpm) {
  const auto bytes = io::encode_sample_grid(Tensor::zeros({3, 1, 2, 2}), 2, "z");
  const auto pnm = oracle::read_pnm(bytes);
  EXPECT_EQ(pnm.width, 4u);
  EXPECT_EQ(pnm.height, 4u);
  for (auto b : pnm.pixels) EXPECT_EQ(b, 0);
  const auto colour = oracle::read_pnm(io::encode_sample_grid(Tensor::full({1, 3, 2, 2}, 1.0), 1, "c"));
  EXPECT_EQ(colour.magic, "P6");
  EXPECT_EQ(colour.pixels.size(), 12u);
  for (auto b : colour.pixels) EXPECT_EQ(b, 255);
  EXPECT_THROW(io::encode_sample_grid(Tensor::zeros({1, 2, 2, 2}), 1, "c"), ShapeError);
  EXPECT_THROW(io::encode_sample_grid(Tensor::zeros({1, 1, 2, 2}), 0, "c"), std::invalid_argument);
  EXPECT_THROW(io::export_samples("/nonexistent/dir/x.pgm", Tensor::zeros({1, 1, 2, 2}), 1, "c"), FormatError);
}
