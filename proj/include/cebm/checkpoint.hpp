#pragma once

// Binary checkpoint container (little-endian):
//
//   "CEBM"              4 bytes
//   version             u32
//   model kind          u32 length + bytes
//   training step       u64
//   RNG state           u32 length + bytes
//   config echo         u32 length + bytes
//   parameter count     u32
//   per parameter:      u32 name length + name, u32 rank, rank x u64 extents,
//                       u64 element count, count x f64 payload

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cebm/model.hpp"
#include "cebm/tensor.hpp"

namespace cebm::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kMaxTensorRank = 8;

struct NamedTensor {
  std::string name;
  Tensor value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string model_kind;
  std::uint64_t step = 0;
  std::string rng_state;
  std::string config_echo;
  std::vector<NamedTensor> params;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws FormatError (bad_magic, unsupported_version, truncated with byte
// offset, duplicate_name, invalid_value) on malformed input.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const model::EnergyModel& m, std::uint64_t step, std::string rng_state,
                           std::string config_echo);
// Copies parameters by name; throws FormatError on a missing name or shape mismatch.
void restore_parameters(model::EnergyModel& m, const Checkpoint& ckpt);

}  // namespace cebm::io
