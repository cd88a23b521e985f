#pragma once

// Shared plumbing: error types, stable hashing, canonical number formatting.

#include <array>
#include <charconv>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace cnnlstm {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  ok = 0,
  config_error = 2,
  data_error = 3,
  numerical_divergence = 4,
};

/// Base of every error the library throws. Each subclass maps onto one exit code.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Invalid parameters, shapes, or configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::config_error) {}
};

/// Input data that cannot be parsed or cleaned.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, ExitCode::data_error) {}
};

class DuplicateDate : public DataError {
 public:
  using DataError::DataError;
};

class EdgeMissing : public DataError {
 public:
  using DataError::DataError;
};

class TooShort : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateVariance : public DataError {
 public:
  using DataError::DataError;
};

/// Training or optimisation produced no usable number.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(what, ExitCode::numerical_divergence) {}
};

class Diverged : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateObjective : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// 64-bit FNV-1a. Stable across platforms and runs, unlike std::hash.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) noexcept {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffU;
    h *= kFnvPrime;
  }
  return h;
}

/// splitmix64 finaliser; used to derive independent seeds from a parent seed.
inline constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::string to_hex(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xfU];
    v >>= 4;
  }
  return out;
}

/// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double: to_chars failed");
  return std::string(buf.data(), ptr);
}

}  // namespace cnnlstm
