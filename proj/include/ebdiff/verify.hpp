#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ebdiff {

// One named self-check outcome. detail carries the measured quantity (max
// error, mean/bounds, ...) or the failure reason.
struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Runs the built-in property suite: stream determinism against frozen golden
// values, kernel backend equivalence, the diffusion posterior against the
// brute-force general-kernel evaluation, tilted-posterior and
// self-normalization identities, partition bracket ordering and coverage,
// sampler reduction bit-identity, pair-loss basics, and a Monte Carlo vs exact
// bound comparison. Checks trap exceptions and report them as failures. The
// seed feeds every randomized check, so a given seed is fully reproducible.
std::vector<VerifyCheck> verify_all(std::uint64_t seed);

}  // namespace ebdiff
