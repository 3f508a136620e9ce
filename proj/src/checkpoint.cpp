#include "cebm/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "cebm/data.hpp"
#include "cebm/errors.hpp"

namespace cebm::io {

namespace {

constexpr char kMagic[4] = {'C', 'E', 'B', 'M'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) {
      throw FormatError(FormatErrorKind::truncated,
                        "checkpoint truncated at byte offset " + std::to_string(pos_),
                        static_cast<std::int64_t>(pos_));
    }
  }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(ckpt.version);
  w.str(ckpt.model_kind);
  w.u64(ckpt.step);
  w.str(ckpt.rng_state);
  w.str(ckpt.config_echo);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u64(d);
    w.u64(p.value.size());
    for (double v : p.value.data()) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::bad_magic, "not a CEBM checkpoint (bad magic)", 0);
  }
  r.skip(4);
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::unsupported_version,
                      "unsupported checkpoint version " + std::to_string(ckpt.version) +
                          " (this build reads version " + std::to_string(kCheckpointVersion) + ")",
                      4);
  }
  ckpt.model_kind = r.str();
  ckpt.step = r.u64();
  ckpt.rng_state = r.str();
  ckpt.config_echo = r.str();
  const std::uint32_t count = r.u32();
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t entry_offset = r.pos();
    std::string name = r.str();
    if (!seen.insert(name).second) {
      throw FormatError(FormatErrorKind::duplicate_name, "duplicate parameter name '" + name + "'",
                        static_cast<std::int64_t>(entry_offset));
    }
    const std::uint32_t rank = r.u32();
    if (rank > kMaxTensorRank) {
      throw FormatError(FormatErrorKind::invalid_value,
                        "parameter '" + name + "' has rank " + std::to_string(rank),
                        static_cast<std::int64_t>(r.pos()));
    }
    Shape shape(rank);
    std::uint64_t expected = 1;
    bool overflow = false;
    for (auto& d : shape) {
      const std::uint64_t extent = r.u64();
      if (extent != 0 && expected > UINT64_MAX / extent) overflow = true;
      expected *= extent;
      d = static_cast<std::size_t>(extent);
    }
    const std::size_t count_offset = r.pos();
    const std::uint64_t elements = r.u64();
    if (overflow || elements != expected) {
      throw FormatError(FormatErrorKind::invalid_value,
                        "parameter '" + name + "' element count disagrees with its shape",
                        static_cast<std::int64_t>(count_offset));
    }
    if (elements > r.remaining() / 8) {
      throw FormatError(FormatErrorKind::truncated,
                        "checkpoint truncated at byte offset " + std::to_string(r.pos()) +
                            " inside parameter '" + name + "'",
                        static_cast<std::int64_t>(r.pos()));
    }
    std::vector<double> payload(static_cast<std::size_t>(elements));
    for (double& v : payload) v = r.f64();
    ckpt.params.push_back({std::move(name), Tensor(std::move(shape), std::move(payload))});
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::io_failure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::io_failure, "write failure on " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(data::read_file_bytes(path));
}

Checkpoint make_checkpoint(const model::EnergyModel& m, std::uint64_t step, std::string rng_state,
                           std::string config_echo) {
  Checkpoint ckpt;
  ckpt.model_kind = model::to_string(m.kind());
  ckpt.step = step;
  ckpt.rng_state = std::move(rng_state);
  ckpt.config_echo = std::move(config_echo);
  for (const auto& e : m.params()) ckpt.params.push_back({e.name, e.value});
  return ckpt;
}

void restore_parameters(model::EnergyModel& m, const Checkpoint& ckpt) {
  if (ckpt.model_kind != model::to_string(m.kind())) {
    throw FormatError(FormatErrorKind::invalid_value,
                      "checkpoint holds a '" + ckpt.model_kind + "' model, expected '" +
                          model::to_string(m.kind()) + "'");
  }
  for (auto& e : m.params()) {
    auto it = std::find_if(ckpt.params.begin(), ckpt.params.end(),
                           [&](const NamedTensor& p) { return p.name == e.name; });
    if (it == ckpt.params.end()) {
      throw FormatError(FormatErrorKind::invalid_value, "checkpoint lacks parameter '" + e.name + "'");
    }
    if (it->value.shape() != e.value.shape()) {
      throw FormatError(FormatErrorKind::invalid_value,
                        "parameter '" + e.name + "' has shape " + shape_string(it->value.shape()) +
                            ", model expects " + shape_string(e.value.shape()));
    }
    e.value = it->value;
  }
}

}  // namespace cebm::io
