// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "lgd/numerics.hpp"

namespace lgd {

/// Identifier written next to every seed so that outputs name the generator.
inline constexpr std::string_view kRngAlgorithm = "splitmix64-counter/fnv1a-streams/v1";

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a, used to turn stream names into stream ids.
inline constexpr std::uint64_t stream_id(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based generator: draw n of stream s under seed k is
/// mix(key(k, s) + n * gamma). Any draw is addressable by (seed, stream,
/// counter), so the state checkpoints as a seed + counter pair.
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) noexcept
      : seed_(seed),
        stream_(stream),
        key_(splitmix64_mix(seed ^ splitmix64_mix(stream + kGamma))),
        counter_(counter) {}

  CounterRng(std::uint64_t seed, std::string_view stream_name, std::uint64_t counter = 0) noexcept
      : CounterRng(seed, stream_id(stream_name), counter) {}

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return splitmix64_mix(key_ + counter_ * kGamma);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  Index below(Index n) noexcept {
    return static_cast<Index>(uniform() * static_cast<double>(n));
  }

  /// Standard normal via Box-Muller; always consumes exactly two draws.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }
  void set_counter(std::uint64_t c) noexcept { counter_ = c; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_;
};

/// Row-major fill with N(0, sigma^2) entries.
inline Matrix<double> normal_matrix(Index rows, Index cols, double sigma, CounterRng& rng) {
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = sigma * rng.normal();
  }
  return m;
}

}  // namespace lgd
