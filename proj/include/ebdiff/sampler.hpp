#pragma once

#include <span>
#include <vector>

#include "ebdiff/diffusion.hpp"
#include "ebdiff/energy.hpp"
#include "ebdiff/rng.hpp"
#include "ebdiff/schedule.hpp"
#include "ebdiff/types.hpp"

namespace ebdiff {

// Reverse-chain configuration. The trajectory visits times t_0 = 1 > ... > t_N = 0
// (uniform grid t_n = 1 - n/N unless a custom strictly decreasing grid is given)
// starting from the all-mask state. At each transition leaving time t the
// energy-guided sampler draws k x0 candidates from the factorized predictor and
// resamples one by softmax(-energy) while t >= 1 - window; outside the window
// (and always when window == 0) it reduces to the single-candidate base chain.
struct SamplerConfig {
  int steps = 32;
  int k = 1;
  double window = 0.0;            // w in [0,1]
  std::vector<double> grid;       // optional custom t_0 > ... > t_N; empty = uniform
};

// Softmax(-energies) draw, max-shifted. Throws SamplerError when no candidate
// has finite energy (+inf entries are fine and get zero weight).
std::size_t resample_index(std::span<const double> energies, RngStream& rng);

// Ancestral chain with the factorized predictor alone.
TokenSeq sample_base(const X0Model& model, const NoiseSchedule& sched, std::size_t len,
                     const SamplerConfig& cfg, const RngStream& rng);

// Energy-guided chain. With k == 1 or window == 0 this consumes the exact same
// random streams as sample_base and returns bit-identical trajectories.
TokenSeq sample_energy(const X0Model& model, const EnergyModel& energy,
                       const NoiseSchedule& sched, std::size_t len, const SamplerConfig& cfg,
                       const RngStream& rng);

// The uniform grid described above; exposed for eval/bench code that needs the
// same time points.
std::vector<double> uniform_grid(int steps);

}  // namespace ebdiff
