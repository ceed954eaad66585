#include "ebdiff/diffusion.hpp"

#include <cmath>
#include <limits>

#include "ebdiff/kernels.hpp"

namespace ebdiff {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_times(double s, double t) {
  if (!(s >= 0.0 && t <= 1.0)) throw DomainError("times outside [0,1]");
  if (s > t) throw DomainError("reverse transition requires s <= t");
}

void check_pair(const TokenSeq& x0, const TokenSeq& xt) {
  if (x0.vocab != xt.vocab || x0.size() != xt.size())
    throw PreconditionError("x0/x_t shape or vocab mismatch");
  if (!x0.fully_unmasked()) throw PreconditionError("x0 must contain no mask tokens");
  for (std::size_t i = 0; i < xt.size(); ++i)
    if (!xt.is_masked(i) && xt[i] != x0[i])
      throw InconsistentPairError("x_t disagrees with x0 at an unmasked position");
}

}  // namespace

TokenSeq forward_sample(const TokenSeq& x0, double t, const NoiseSchedule& sched, RngStream& rng) {
  if (!x0.fully_unmasked()) throw PreconditionError("forward_sample: x0 must contain no masks");
  double a = sched.alpha(t);
  TokenSeq xt = x0;
  for (std::size_t i = 0; i < xt.size(); ++i)
    if (!(rng.next_double() < a)) xt[i] = xt.mask_id();
  return xt;
}

TokenSeq forward_extend(const TokenSeq& xs, double s, double t, const NoiseSchedule& sched,
                        RngStream& rng) {
  check_times(s, t);
  double ratio = sched.alpha_ratio(s, t);
  TokenSeq xt = xs;
  for (std::size_t i = 0; i < xt.size(); ++i) {
    double u = rng.next_double();
    if (!xt.is_masked(i) && !(u < ratio)) xt[i] = xt.mask_id();
  }
  return xt;
}

PosteriorStep posterior(const TokenSeq& x0, const TokenSeq& xt, double s, double t,
                        const NoiseSchedule& sched) {
  check_times(s, t);
  check_pair(x0, xt);
  double as = sched.alpha(s);
  double at = sched.alpha(t);
  double p_reveal = (as - at) / (1.0 - at);
  double p_mask = (1.0 - as) / (1.0 - at);
  PosteriorStep step;
  step.s = s;
  step.t = t;
  std::size_t n = xt.size();
  step.reveal_token.resize(n);
  step.p_reveal.resize(n);
  step.p_mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (xt.is_masked(i)) {
      step.reveal_token[i] = x0[i];
      step.p_reveal[i] = p_reveal;
      step.p_mask[i] = p_mask;
    } else {
      step.reveal_token[i] = xt[i];
      step.p_reveal[i] = 1.0;
      step.p_mask[i] = 0.0;
    }
  }
  return step;
}

TokenSeq posterior_sample(const TokenSeq& xt, const PosteriorStep& step, RngStream& rng) {
  if (step.reveal_token.size() != xt.size()) throw PreconditionError("posterior step shape mismatch");
  TokenSeq xs = xt;
  for (std::size_t i = 0; i < xt.size(); ++i) {
    if (!xt.is_masked(i)) continue;
    double u = rng.next_double();
    xs[i] = u < step.p_reveal[i] ? step.reveal_token[i] : xt.mask_id();
  }
  return xs;
}

DenoiserOutput factorized_predict(const X0Model& model, const TokenSeq& xt, double t,
                                  const NoiseSchedule& sched) {
  if (model.vocab() != xt.vocab) throw PreconditionError("model/vocab mismatch");
  std::size_t L = xt.size();
  std::size_t V = static_cast<std::size_t>(xt.vocab);
  DenoiserOutput out;
  out.logits = Matrix(L, V);
  out.probs = Matrix(L, V);
  out.log_probs = Matrix(L, V);
  model.score(xt, sched.mask_level(t), out.logits);
  for (std::size_t i = 0; i < L; ++i) {
    if (xt.is_masked(i)) {
      auto logits = out.logits.row(i);
      // -inf marks a token the model rules out entirely and is fine; NaN and
      // +inf are model bugs.
      for (double v : logits)
        if (std::isnan(v) || v == -kNegInf)
          throw ModelError("denoiser produced a non-finite score");
      double lse = kernels::softmax(logits, out.probs.row(i));
      auto lp = out.log_probs.row(i);
      for (std::size_t v = 0; v < V; ++v) lp[v] = logits[v] - lse;
    } else {
      auto logits = out.logits.row(i);
      auto p = out.probs.row(i);
      auto lp = out.log_probs.row(i);
      for (std::size_t v = 0; v < V; ++v) {
        bool hit = static_cast<Token>(v) == xt[i];
        logits[v] = hit ? 0.0 : kNegInf;
        p[v] = hit ? 1.0 : 0.0;
        lp[v] = hit ? 0.0 : kNegInf;
      }
    }
  }
  return out;
}

namespace {
void check_mu_rows(const TokenSeq& xt, const DenoiserOutput& mu) {
  if (mu.probs.rows() != xt.size() || mu.probs.cols() != static_cast<std::size_t>(xt.vocab))
    throw PreconditionError("denoiser output shape mismatch");
  for (std::size_t i = 0; i < xt.size(); ++i) {
    if (!xt.is_masked(i)) continue;
    double s = kernels::active().reduce_sum(mu.probs.row(i));
    if (std::abs(s - 1.0) > 1e-9) throw ModelError("denoiser row not normalized");
  }
}
}  // namespace

TokenSeq reverse_step(const TokenSeq& xt, const DenoiserOutput& mu, double s, double t,
                      const NoiseSchedule& sched, RngStream& rng) {
  check_times(s, t);
  check_mu_rows(xt, mu);
  double as = sched.alpha(s);
  double at = sched.alpha(t);
  double p_reveal = (as - at) / (1.0 - at);
  TokenSeq xs = xt;
  for (std::size_t i = 0; i < xt.size(); ++i) {
    if (!xt.is_masked(i)) continue;
    if (rng.next_double() < p_reveal)
      xs[i] = static_cast<Token>(rng.next_categorical(mu.probs.row(i)));
  }
  return xs;
}

TokenSeq draw_x0(const TokenSeq& xt, const DenoiserOutput& mu, RngStream& rng) {
  check_mu_rows(xt, mu);
  TokenSeq x0 = xt;
  for (std::size_t i = 0; i < xt.size(); ++i)
    if (xt.is_masked(i)) x0[i] = static_cast<Token>(rng.next_categorical(mu.probs.row(i)));
  return x0;
}

double factorized_logprob(const TokenSeq& xt, const DenoiserOutput& mu, const TokenSeq& x0) {
  check_pair(x0, xt);
  if (mu.log_probs.rows() != xt.size()) throw PreconditionError("denoiser output shape mismatch");
  double lp = 0.0;
  for (std::size_t i = 0; i < xt.size(); ++i)
    if (xt.is_masked(i)) lp += mu.log_probs.at(i, static_cast<std::size_t>(x0[i]));
  return lp;
}

}  // namespace ebdiff
