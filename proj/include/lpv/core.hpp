#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lpv {

template <class S>
using mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// process exit codes used by the CLI
inline constexpr int exit_ok = 0;
inline constexpr int exit_config_error = 2;
inline constexpr int exit_numerical_failure = 3;
inline constexpr int exit_isolation_abort = 4;

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// thrown with the name of the component where a non-finite value appeared
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// stop-gradient barrier violation (audit failure)
struct isolation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a, 64-bit. Used for config hashes and weight checksums; stable
// across platforms because it only ever sees bytes.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), seed);
}

// exact match for string literals so they never bind to the (void*, len)
// overload
inline std::uint64_t fnv1a64(const char* s,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a64(std::string(s), seed);
}

template <class Derived>
std::uint64_t checksum(const Eigen::MatrixBase<Derived>& m,
                       std::uint64_t seed = 0xcbf29ce484222325ull) {
  using S = typename Derived::Scalar;
  std::uint64_t h = seed;
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      S v = m(r, c);
      h = fnv1a64(&v, sizeof(S), h);
    }
  return h;
}

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

inline std::string hex64(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace lpv
