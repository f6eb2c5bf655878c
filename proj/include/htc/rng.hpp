// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace htc {

// Deterministic RNG used everywhere. Distribution sampling is hand-rolled
// on top of mt19937_64 so that streams are reproducible across platforms
// and standard-library versions (std::*_distribution is unspecified).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n); n must be > 0. Rejection-free modulo bias is
  // negligible for the small n used here, but do the rejection anyway.
  uint64_t uniform_below(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Box-Muller, one value per call (spare cached).
  double gauss(double mean, double stddev) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1, u2;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

  // Gumbel(0,1): g = -log(-log(U)), U in (0,1).
  double gumbel() {
    double u;
    do {
      u = uniform01();
    } while (u <= 0.0);
    return -std::log(-std::log(u));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derive an independent sub-seed from a master seed and a stream label,
// so different consumers (init, shuffling, per-step noise) never share a
// stream by accident. FNV-1a over the label, mixed with the seed.
inline uint64_t derive_seed(uint64_t master, std::string_view label,
                            uint64_t index = 0) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  mix(master);
  mix(index);
  // splitmix64 finalizer for avalanche
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

}  // namespace htc
