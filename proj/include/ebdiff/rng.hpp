#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "ebdiff/errors.hpp"

namespace ebdiff {

// Deterministic stream of pseudo-random numbers. All randomness in the project
// flows from one root seed through named substreams ("train", "sample/step-3/
// candidate-1", ...), so two code paths that read the same stream names see the
// same numbers regardless of how other streams interleave. That property is what
// makes the k=1 and w=0 sampler reductions bit-exact against the base sampler.
//
// Core generator is splitmix64 (Steele et al.); substream keys are derived by
// FNV-1a hashing the child name into the parent key. Output is identical across
// platforms and compilers, unlike std::uniform_*_distribution.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(mix_(seed ^ kRootSalt)), state_(key_) {}

  // Derives an independent child stream. Same (parent, name) always yields the
  // same child; the derivation key is fixed at construction, so drawing from the
  // parent does not change which children it produces.
  RngStream child(std::string_view name) const {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64 offset basis
    for (unsigned char c : name) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    RngStream s(0);
    s.key_ = mix_(key_ ^ h);
    s.state_ = s.key_;
    return s;
  }

  RngStream child_indexed(std::string_view name, std::uint64_t index) const {
    return child(std::string(name) + "-" + std::to_string(index));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Index draw from unnormalized non-negative weights, by inverse CDF in array
  // order (fixed consumption: exactly one uniform per call).
  std::size_t next_categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw DomainError("categorical weight negative or NaN");
      total += w;
    }
    if (!(total > 0.0)) throw DomainError("categorical weights sum to zero");
    double u = next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.size() - 1;
  }

 private:
  static constexpr std::uint64_t kRootSalt = 0x6d6173646966ull;

  static std::uint64_t mix_(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t key_;    // derivation key, fixed at construction
  std::uint64_t state_;  // draw position
};

}  // namespace ebdiff
