#include "ebdiff/energy.hpp"

#include <algorithm>
#include <cmath>

#include "ebdiff/errors.hpp"
#include "ebdiff/kernels.hpp"

namespace ebdiff {

double energy_ar(const ARModel& ar, const TokenSeq& x0, const TokenSeq& xt,
                 const DenoiserOutput& mu) {
  return -ar.logprob(x0) + factorized_logprob(xt, mu, x0);
}

double ar_carried_logprob(const ARModel& ar, const TokenSeq& x0, const TokenSeq& xt) {
  if (x0.size() != xt.size()) throw PreconditionError("carried logprob: shape mismatch");
  double lp = 0.0;
  std::span<const Token> all(x0.tokens);
  for (std::size_t i = 0; i < x0.size(); ++i)
    if (!xt.is_masked(i)) lp += ar.cond_logprob(all.first(i), x0[i]);
  return lp;
}

double energy_coar(const ARModel& ar, const TokenSeq& x0, const TokenSeq& xt,
                   const DenoiserOutput& mu) {
  if (x0.size() != xt.size()) throw PreconditionError("coar energy: shape mismatch");
  double ref = 0.0;
  std::span<const Token> all(x0.tokens);
  for (std::size_t i = 0; i < x0.size(); ++i)
    if (xt.is_masked(i)) ref += ar.cond_logprob(all.first(i), x0[i]);
  return -ref + factorized_logprob(xt, mu, x0);
}

NceEnergy::NceEnergy(Token vocab) : vocab_(vocab) {
  if (vocab < 1) throw ConfigError("nce energy vocab must be >= 1");
  std::size_t V = static_cast<std::size_t>(vocab);
  params_.assign(2 * V + V * V + 2, 0.0);
}

// Layout of phi: [unigram V][unigram-at-masked V][bigram V*V][mask fraction][time].
double NceEnergy::energy_at(const TokenSeq& x0, const TokenSeq& xt, double mask_level) const {
  if (x0.vocab != vocab_ || x0.size() != xt.size())
    throw PreconditionError("nce energy: shape or vocab mismatch");
  if (!x0.fully_unmasked()) throw PreconditionError("nce energy: x0 must contain no masks");
  std::size_t V = static_cast<std::size_t>(vocab_);
  std::size_t L = x0.size();
  const double* uni = params_.data();
  const double* unim = params_.data() + V;
  const double* big = params_.data() + 2 * V;
  double mask_frac_w = params_[2 * V + V * V];
  double time_w = params_[2 * V + V * V + 1];

  double acc_uni = 0.0, acc_unim = 0.0, acc_big = 0.0;
  std::size_t masked = 0;
  for (std::size_t i = 0; i < L; ++i) {
    std::size_t tok = static_cast<std::size_t>(x0[i]);
    acc_uni += uni[tok];
    if (xt.is_masked(i)) {
      acc_unim += unim[tok];
      ++masked;
    }
    if (i + 1 < L) acc_big += big[tok * V + static_cast<std::size_t>(x0[i + 1])];
  }
  double e = acc_uni / static_cast<double>(L) + acc_unim / static_cast<double>(L);
  if (L >= 2) e += acc_big / static_cast<double>(L - 1);
  e += mask_frac_w * (static_cast<double>(masked) / static_cast<double>(L));
  e += time_w * mask_level;
  return e;
}

void NceEnergy::features(const TokenSeq& x0, const TokenSeq& xt, double mask_level,
                         std::span<double> out) const {
  if (out.size() != params_.size()) throw PreconditionError("nce features: wrong output size");
  if (x0.vocab != vocab_ || x0.size() != xt.size())
    throw PreconditionError("nce features: shape or vocab mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  std::size_t V = static_cast<std::size_t>(vocab_);
  std::size_t L = x0.size();
  double inv_l = 1.0 / static_cast<double>(L);
  double inv_b = L >= 2 ? 1.0 / static_cast<double>(L - 1) : 0.0;
  std::size_t masked = 0;
  for (std::size_t i = 0; i < L; ++i) {
    std::size_t tok = static_cast<std::size_t>(x0[i]);
    out[tok] += inv_l;
    if (xt.is_masked(i)) {
      out[V + tok] += inv_l;
      ++masked;
    }
    if (i + 1 < L) out[2 * V + tok * V + static_cast<std::size_t>(x0[i + 1])] += inv_b;
  }
  out[2 * V + V * V] = static_cast<double>(masked) * inv_l;
  out[2 * V + V * V + 1] = mask_level;
}

double joint_logprob_unnormalized(const EnergyModel& energy, const TokenSeq& x0,
                                  const EnergyContext& ctx) {
  double e = energy.energy(x0, ctx);
  if (std::isnan(e)) throw ModelError("energy returned NaN");
  return factorized_logprob(ctx.xt, ctx.mu, x0) - e;
}

}  // namespace ebdiff
