#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cebm {

// Parameter outside the domain of a log normalizer, Legendre map or density.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Incompatible tensor extents or container sizes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values reached a graph boundary.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A sampler or training loop produced a non-finite energy or gradient.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::int64_t step)
      : std::runtime_error(what), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

enum class FormatErrorKind {
  io_failure,
  bad_magic,
  unsupported_version,
  truncated,
  count_mismatch,
  duplicate_name,
  invalid_value,
};

const char* to_string(FormatErrorKind kind);

// Typed failure from any file reader or writer. `offset` is the byte offset
// where reading stopped, or -1 when not applicable.
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what, std::int64_t offset = -1)
      : std::runtime_error(what), kind_(kind), offset_(offset) {}
  FormatErrorKind kind() const noexcept { return kind_; }
  std::int64_t offset() const noexcept { return offset_; }

 private:
  FormatErrorKind kind_;
  std::int64_t offset_;
};

// Run configuration could not be parsed or validated.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cebm
