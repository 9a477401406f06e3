#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

// The numeric core is compiled twice: once with 32-bit reals for training runs
// and once with 64-bit reals for finite-difference gradient checks. Each build
// lives in its own inline namespace so both can be linked into one binary.
#if defined(SEDN_DOUBLE)
#define SEDN_BEGIN_NAMESPACE \
  namespace sedn {           \
  inline namespace f64 {
#else
#define SEDN_BEGIN_NAMESPACE \
  namespace sedn {           \
  inline namespace f32 {
#endif
#define SEDN_END_NAMESPACE \
  }                        \
  }

namespace sedn {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

inline const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary or text input. `offset` is the byte offset (or line
/// number for text formats) where parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }
  /// The message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::uint64_t offset_;
};

}  // namespace sedn

SEDN_BEGIN_NAMESPACE
#if defined(SEDN_DOUBLE)
using Real = double;
inline constexpr DType kRealDType = DType::f64;
#else
using Real = float;
inline constexpr DType kRealDType = DType::f32;
#endif
SEDN_END_NAMESPACE
