#include "cebm/rng.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "cebm/errors.hpp"

namespace cebm {

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::io_failure: return "io_failure";
    case FormatErrorKind::bad_magic: return "bad_magic";
    case FormatErrorKind::unsupported_version: return "unsupported_version";
    case FormatErrorKind::truncated: return "truncated";
    case FormatErrorKind::count_mismatch: return "count_mismatch";
    case FormatErrorKind::duplicate_name: return "duplicate_name";
    case FormatErrorKind::invalid_value: return "invalid_value";
  }
  return "unknown";
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_ = radius * std::sin(angle);
  has_cached_ = true;
  return radius * std::cos(angle);
}

Rng Rng::split() {
  // SplitMix64 finalizer decorrelates the child seed from the parent stream.
  std::uint64_t z = engine_() + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return Rng(z ^ (z >> 31));
}

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_ << ' ' << (has_cached_ ? 1 : 0) << ' ';
  std::uint64_t bits;
  std::memcpy(&bits, &cached_, sizeof bits);
  out << bits;
  return out.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream in(text);
  std::mt19937_64 engine;
  int cached_flag = 0;
  std::uint64_t bits = 0;
  in >> engine >> cached_flag >> bits;
  if (in.fail()) throw FormatError(FormatErrorKind::invalid_value, "malformed RNG state");
  engine_ = engine;
  has_cached_ = cached_flag != 0;
  std::memcpy(&cached_, &bits, sizeof bits);
}

}  // namespace cebm
