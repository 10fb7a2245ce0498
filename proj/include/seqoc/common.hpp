#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

namespace seqoc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Detector output and item label. +1 is nominal, -1 anomalous.
enum class Sign : int { negative = -1, positive = 1 };

/// sgn with sgn(0) = +1.
inline Sign sign_of(double value) noexcept {
  return value >= 0.0 ? Sign::positive : Sign::negative;
}

inline int to_int(Sign s) noexcept { return static_cast<int>(s); }

inline double to_double(Sign s) noexcept { return static_cast<double>(to_int(s)); }

/// Logistic function, branching on sign so exp never overflows.
inline double sigmoid(double x) noexcept {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double log1pexp(double x) noexcept {
  if (x > 0.0) {
    return x + std::log1p(std::exp(-x));
  }
  return std::log1p(std::exp(x));
}

/// Derives an independent seed for a named random stream from a top-level seed
/// (FNV-1a over the name, then a splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : stream) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (h | 1ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace seqoc
