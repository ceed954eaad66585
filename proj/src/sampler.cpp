#include "ebdiff/sampler.hpp"

#include <cmath>
#include <limits>

#include "ebdiff/kernels.hpp"

namespace ebdiff {

std::vector<double> uniform_grid(int steps) {
  if (steps < 1) throw ConfigError("sampler needs at least one step");
  std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
  for (int n = 0; n <= steps; ++n)
    grid[static_cast<std::size_t>(n)] = 1.0 - static_cast<double>(n) / static_cast<double>(steps);
  grid.back() = 0.0;
  return grid;
}

std::size_t resample_index(std::span<const double> energies, RngStream& rng) {
  if (energies.empty()) throw SamplerError("resample over zero candidates");
  double lo = std::numeric_limits<double>::infinity();
  for (double e : energies) {
    if (std::isnan(e)) throw SamplerError("candidate energy is NaN");
    if (e == -std::numeric_limits<double>::infinity())
      throw SamplerError("candidate energy is -inf");
    lo = e < lo ? e : lo;
  }
  if (!std::isfinite(lo)) throw SamplerError("all candidate energies are +inf");
  // weights exp(-(e - min e)); max weight is exactly 1
  std::vector<double> w(energies.size());
  for (std::size_t i = 0; i < energies.size(); ++i) w[i] = std::exp(lo - energies[i]);
  return rng.next_categorical(w);
}

namespace {

std::vector<double> resolve_grid(const SamplerConfig& cfg) {
  if (cfg.grid.empty()) return uniform_grid(cfg.steps);
  const auto& g = cfg.grid;
  if (g.size() < 2) throw ConfigError("custom grid needs at least two time points");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] >= 0.0 && g[i] <= 1.0)) throw ConfigError("grid times must lie in [0,1]");
    if (i > 0 && !(g[i] < g[i - 1])) throw ConfigError("grid times must strictly decrease");
  }
  return g;
}

// One chain shared by both entry points; energy == nullptr is the base sampler.
TokenSeq run_chain(const X0Model& model, const EnergyModel* energy, const NoiseSchedule& sched,
                   std::size_t len, const SamplerConfig& cfg, const RngStream& rng) {
  if (cfg.k < 1) throw ConfigError("sampler k must be >= 1");
  if (!(cfg.window >= 0.0 && cfg.window <= 1.0)) throw ConfigError("window must lie in [0,1]");
  std::vector<double> grid = resolve_grid(cfg);

  TokenSeq xt = TokenSeq::all_masked(len, model.vocab());
  std::vector<TokenSeq> candidates;
  std::vector<double> energies;
  for (std::size_t n = 0; n + 1 < grid.size(); ++n) {
    double t = grid[n];
    double s = grid[n + 1];
    RngStream step = rng.child_indexed("step", n);
    DenoiserOutput mu = factorized_predict(model, xt, t, sched);

    bool active = energy != nullptr && cfg.window > 0.0 && t >= 1.0 - cfg.window - 1e-12;
    TokenSeq x0(std::vector<Token>(), xt.vocab);
    if (active) {
      candidates.clear();
      energies.clear();
      EnergyContext ctx{xt, t, sched.mask_level(t), mu};
      for (int i = 0; i < cfg.k; ++i) {
        RngStream cand = step.child_indexed("candidate", static_cast<std::uint64_t>(i));
        candidates.push_back(draw_x0(xt, mu, cand));
        energies.push_back(energy->energy(candidates.back(), ctx));
      }
      if (cfg.k == 1) {
        x0 = std::move(candidates.front());  // degenerate resample skipped
      } else {
        RngStream rr = step.child("resample");
        x0 = std::move(candidates[resample_index(energies, rr)]);
      }
    } else {
      RngStream cand = step.child_indexed("candidate", 0);
      x0 = draw_x0(xt, mu, cand);
    }

    if (s == 0.0) {
      // commit the candidate: the eps -> 0 limit of the posterior at s = 0
      xt = std::move(x0);
    } else {
      PosteriorStep post = posterior(x0, xt, s, t, sched);
      RngStream pr = step.child("posterior");
      xt = posterior_sample(xt, post, pr);
    }
  }
  if (!xt.fully_unmasked())
    throw SamplerError("masks remain after the final step (grid does not reach 0)");
  return xt;
}

}  // namespace

TokenSeq sample_base(const X0Model& model, const NoiseSchedule& sched, std::size_t len,
                     const SamplerConfig& cfg, const RngStream& rng) {
  return run_chain(model, nullptr, sched, len, cfg, rng);
}

TokenSeq sample_energy(const X0Model& model, const EnergyModel& energy,
                       const NoiseSchedule& sched, std::size_t len, const SamplerConfig& cfg,
                       const RngStream& rng) {
  return run_chain(model, &energy, sched, len, cfg, rng);
}

}  // namespace ebdiff
