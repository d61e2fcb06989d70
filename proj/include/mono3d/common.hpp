#pragma once
// Error types, numeric guards and the deterministic RNG shared by all modules.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace mono3d {

// Minimum camera-frame depth (meters) accepted by projection ops. Small enough
// to never reject a real scene depth, large enough to keep 1/z finite.
inline constexpr double kMinDepth = 1e-6;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInputError : Error { using Error::Error; };
struct BehindCameraError : Error { using Error::Error; };
struct OutOfBoundsError : Error { using Error::Error; };
struct InsufficientSupportError : Error { using Error::Error; };
struct NoSupportError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct CorruptDataError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// Shortest decimal that parses back to exactly the same double; used by every
// text format so serialize/parse fixpoints are byte-stable.
inline std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& what) {
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ParseError(what + ": not a number: '" + std::string(text) + "'");
  }
  return value;
}

inline long parse_long(std::string_view text, const std::string& what) {
  long value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ParseError(what + ": not an integer: '" + std::string(text) + "'");
  }
  return value;
}

// Wraps an angle to (-pi, pi]; -pi maps to +pi.
inline double wrap_angle(double a) {
  if (!std::isfinite(a)) throw InvalidInputError("wrap_angle: non-finite angle");
  const double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r <= 0.0) r += two_pi;
  return r - std::numbers::pi;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based deterministic generator (splitmix64 core). Streams derived via
// Rng::stream(seed, {keys...}) are independent of each other, so per-scene /
// per-stage streams give results that do not depend on evaluation order.
// Samplers are hand-rolled (not std::*_distribution) so byte-for-byte
// reproducibility does not hinge on the standard library version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = detail::mix64(seed + 0x9e3779b97f4a7c15ull);
    for (std::uint64_t k : keys) {
      h = detail::mix64(h ^ (k + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2)));
    }
    return Rng(h);
  }

  std::uint64_t next_u64() { return detail::splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % range);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Zero-mean Laplacian with the given scale b (std = b*sqrt(2)).
  double laplace(double scale) {
    const double u = uniform() - 0.5;
    const double s = u < 0.0 ? -1.0 : 1.0;
    return -scale * s * std::log1p(-2.0 * std::abs(u));
  }

 private:
  std::uint64_t state_;
};

}  // namespace mono3d
