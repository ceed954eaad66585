#pragma once

#include <vector>

#include "ebdiff/rng.hpp"
#include "ebdiff/schedule.hpp"
#include "ebdiff/types.hpp"

// Forward (masking) and reverse (denoising) kernels of the absorbing-state
// discrete diffusion, plus the factorized x0-predictor plumbing every model
// plugs into. Time convention throughout: t in [0,1], larger t = more masked;
// transitions go from time t to an earlier time s (s <= t).
namespace ebdiff {

// Interface every x0 predictor implements. score() fills unnormalized
// log-scores over the V data tokens (mask excluded from the support) for the
// masked rows of xt; rows at unmasked positions are ignored by callers.
// mask_level is 1 - alpha(t), the scalar models condition on.
class X0Model {
 public:
  virtual ~X0Model() = default;
  virtual Token vocab() const = 0;
  virtual void score(const TokenSeq& xt, double mask_level, Matrix& logits) const = 0;
};

// Per-position output of the factorized predictor. probs rows are softmaxed
// scores at masked positions and exactly one-hot at x_t elsewhere; the mask
// token has no column, so it carries zero mass structurally.
struct DenoiserOutput {
  Matrix logits;     // L x V; unmasked rows hold the one-hot log-pattern (0 / -inf)
  Matrix probs;      // per-row softmax of logits
  Matrix log_probs;  // per-row log-softmax of logits
};

// One reverse transition t -> s in the x0/mask decomposition: each position
// carries a two-point categorical {reveal_token, mask}. Unmasked positions are
// the deterministic copy branch (p_reveal = 1).
struct PosteriorStep {
  double s = 0.0, t = 0.0;
  std::vector<Token> reveal_token;
  std::vector<double> p_reveal;
  std::vector<double> p_mask;
};

// q(x_t | x0): masks each position independently with probability 1 - alpha(t).
// One uniform consumed per position, left to right.
TokenSeq forward_sample(const TokenSeq& x0, double t, const NoiseSchedule& sched, RngStream& rng);

// q(x_t | x_s) for s <= t: already-masked positions stay masked; surviving
// positions survive again with probability alpha(t)/alpha(s). One uniform per
// position, left to right (draws at masked positions are burned for a fixed
// consumption pattern).
TokenSeq forward_extend(const TokenSeq& xs, double s, double t, const NoiseSchedule& sched,
                        RngStream& rng);

// True posterior q(x_s | x_t, x0) of the absorbing chain, s <= t. Masked
// positions reveal x0's token with probability (alpha_s - alpha_t)/(1 - alpha_t)
// and stay masked otherwise; unmasked positions copy x_t. s == t is the valid
// degenerate transition (zero reveal probability).
PosteriorStep posterior(const TokenSeq& x0, const TokenSeq& xt, double s, double t,
                        const NoiseSchedule& sched);

// Draws x_s from a PosteriorStep. One uniform per masked position of xt.
TokenSeq posterior_sample(const TokenSeq& xt, const PosteriorStep& step, RngStream& rng);

// Assembles the factorized reverse parameterization from a model's scores:
// masked rows get softmax(score), unmasked rows the copy one-hot.
DenoiserOutput factorized_predict(const X0Model& model, const TokenSeq& xt, double t,
                                  const NoiseSchedule& sched);

// One ancestral reverse transition t -> s using mu as the x0 predictor: each
// masked position unmasks with the posterior reveal probability and then draws
// its token from mu's row. Consumes one uniform per masked position plus one
// more per position that actually reveals.
TokenSeq reverse_step(const TokenSeq& xt, const DenoiserOutput& mu, double s, double t,
                      const NoiseSchedule& sched, RngStream& rng);

// Full x0 draw from the factorized predictor: masked positions sample from
// their mu rows (one uniform each, left to right), unmasked positions copy.
TokenSeq draw_x0(const TokenSeq& xt, const DenoiserOutput& mu, RngStream& rng);

// log mu(x0 | x_t) = sum over masked positions of log mu_i(x0_i). x0 must be
// fully unmasked and agree with x_t at unmasked positions.
double factorized_logprob(const TokenSeq& xt, const DenoiserOutput& mu, const TokenSeq& x0);

}  // namespace ebdiff
