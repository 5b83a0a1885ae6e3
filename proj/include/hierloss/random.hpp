/*
 * Copyright 2026 The hierloss Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// std::mt19937_64 is bit-exact across standard libraries but the std
// distributions are not, so the few distributions we need live here.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace hierloss {

using Rng = std::mt19937_64;

// splitmix64 finaliser; used to decorrelate nearby integer seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named sub-streams of one seed (model init, validation triplets, ...).
enum class Stream : std::uint64_t {
  kSplitLeaves = 1,
  kSplitWithinLeaf = 2,
  kModelInit = 3,
  kEpochTriplets = 4,
  kBatchShuffle = 5,
  kValidationTriplets = 6,
  kSynthetic = 7,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(mix_seed(mix_seed(seed) ^ static_cast<std::uint64_t>(stream)));
}

// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = Rng::max() - (Rng::max() % range);
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return static_cast<std::size_t>(draw % range);
}

// Uniform integer in [lo, hi].
inline long uniform_int(Rng& rng, long lo, long hi) {
  return lo + static_cast<long>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform_real(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Standard normal via Box-Muller; one draw per call (the pair's second value
// is discarded so the stream position depends only on the call count).
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Fisher-Yates.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

}  // namespace hierloss
