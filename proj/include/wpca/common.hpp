#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace wpca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr const char* kVersion = "0.1.0";

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad parameters or malformed input (CLI exit code 1).
struct InvalidArgument : Error {
  using Error::Error;
};

// Numerical degeneracy detected at runtime: rank deficiency, singular
// covariance, non-PSD input (CLI exit code 2).
struct NumericError : Error {
  using Error::Error;
};

// Rotation toward a reference is undefined because the cross-product
// matrix is (near-)singular.
struct AlignmentError : NumericError {
  using NumericError::NumericError;
};

// SplitMix64 step; used to whiten seeds before feeding the main engine so
// that neighbouring stream ids (seed^0, seed^1, ...) start decorrelated.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic random source. All randomness in the library flows through
// this class so that a (seed, call-order) pair pins every draw exactly;
// normal variates are produced by Box-Muller rather than the standard
// library distribution to keep the stream independent of the C++ runtime.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next_u64() {
    // xorshift* would do; we keep SplitMix64 as the engine itself, which
    // passes BigCrush and has a single word of state.
    return splitmix64(state_ += 0x9e3779b97f4a7c15ULL);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the second variate of each pair is
  // cached so consumption order stays easy to reason about.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// RNG stream for replicate k of a study run with the given base seed.
inline Rng replicate_rng(std::uint64_t seed, std::uint64_t k) {
  return Rng(seed ^ k);
}

// FNV-1a over a byte range; used to fingerprint masks in CV reports.
inline std::uint64_t fnv1a(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace wpca
