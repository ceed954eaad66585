#include "ebdiff/oracle.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "ebdiff/errors.hpp"

namespace ebdiff::oracle {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Positions of xt that carry the mask token.
std::vector<std::size_t> masked_positions(const TokenSeq& xt) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < xt.size(); ++i)
    if (xt.is_masked(i)) out.push_back(i);
  return out;
}

// log Z for a fixed predictor output: enumerates every completion of xt.
double log_partition_impl(const DenoiserOutput& mu, const EnergyModel& energy,
                          const TokenSeq& xt, double t, double mask_level) {
  const EnergyContext ctx{xt, t, mask_level, mu};
  const std::vector<std::size_t> masked = masked_positions(xt);
  TokenSeq x0 = xt;
  if (masked.empty()) {
    const double e = energy.energy(x0, ctx);
    if (std::isnan(e)) throw ModelError("energy NaN in exact partition");
    return -e;
  }
  const std::size_t combos = EnumeratedDistribution::space_size(xt.vocab, masked.size());
  std::vector<double> lw(combos);
  std::vector<Token> digits(masked.size(), 0);
  for (std::size_t c = 0; c < combos; ++c) {
    double lmu = 0.0;
    for (std::size_t d = 0; d < masked.size(); ++d) {
      x0.tokens[masked[d]] = digits[d];
      lmu += mu.log_probs.at(masked[d], static_cast<std::size_t>(digits[d]));
    }
    const double e = energy.energy(x0, ctx);
    if (std::isnan(e)) throw ModelError("energy NaN in exact partition");
    lw[c] = lmu - e;
    for (std::size_t d = masked.size(); d-- > 0;) {
      if (++digits[d] < xt.vocab) break;
      digits[d] = 0;
    }
  }
  return logsumexp(lw);
}

}  // namespace

double logsumexp(std::span<const double> x) {
  double m = -kInf;
  for (double v : x) {
    if (std::isnan(v)) return v;
    if (v > m) m = v;
  }
  if (m == -kInf || m == kInf) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

std::size_t EnumeratedDistribution::space_size(Token vocab, std::size_t len) {
  if (vocab < 1) throw PreconditionError("enumeration needs vocab >= 1");
  if (len == 0) throw PreconditionError("enumeration needs len >= 1");
  std::size_t s = 1;
  for (std::size_t i = 0; i < len; ++i) {
    s *= static_cast<std::size_t>(vocab);
    if (s > kMaxStates) throw CapacityError("sequence space exceeds the enumeration cap");
  }
  return s;
}

std::size_t EnumeratedDistribution::index_of(std::span<const Token> seq) const {
  if (seq.size() != len) throw PreconditionError("sequence length mismatch");
  std::size_t idx = 0;
  for (Token t : seq) {
    if (t < 0 || t >= vocab) throw PreconditionError("token outside the enumerated vocabulary");
    idx = idx * static_cast<std::size_t>(vocab) + static_cast<std::size_t>(t);
  }
  return idx;
}

std::vector<Token> EnumeratedDistribution::seq_at(std::size_t index) const {
  if (index >= probs.size()) throw PreconditionError("state index out of range");
  std::vector<Token> seq(len);
  for (std::size_t i = len; i-- > 0;) {
    seq[i] = static_cast<Token>(index % static_cast<std::size_t>(vocab));
    index /= static_cast<std::size_t>(vocab);
  }
  return seq;
}

double EnumeratedDistribution::prob_of(const TokenSeq& seq) const {
  if (seq.vocab != vocab) throw PreconditionError("vocabulary mismatch");
  return probs[index_of(seq.tokens)];
}

double EnumeratedDistribution::tv(const EnumeratedDistribution& other) const {
  if (other.vocab != vocab || other.len != len)
    throw PreconditionError("distributions over different spaces");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) s += std::abs(probs[i] - other.probs[i]);
  return 0.5 * s;
}

double EnumeratedDistribution::entropy() const {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

EnumeratedDistribution enumerate_logweights(
    Token vocab, std::size_t len, const std::function<double(const TokenSeq&)>& logw) {
  EnumeratedDistribution d;
  d.vocab = vocab;
  d.len = len;
  d.probs.resize(EnumeratedDistribution::space_size(vocab, len));
  std::vector<double> lw(d.probs.size());
  for (std::size_t i = 0; i < lw.size(); ++i) {
    const double v = logw(TokenSeq(d.seq_at(i), vocab));
    if (std::isnan(v)) throw ModelError("NaN log weight during enumeration");
    lw[i] = v;
  }
  const double lse = logsumexp(lw);
  if (lse == -kInf) throw DomainError("enumerated distribution has empty support");
  if (lse == kInf) throw ModelError("infinite log weight during enumeration");
  for (std::size_t i = 0; i < lw.size(); ++i) d.probs[i] = std::exp(lw[i] - lse);
  return d;
}

EnumeratedDistribution empirical(Token vocab, std::size_t len,
                                 std::span<const TokenSeq> samples) {
  if (samples.empty()) throw PreconditionError("empirical distribution needs samples");
  EnumeratedDistribution d;
  d.vocab = vocab;
  d.len = len;
  d.probs.assign(EnumeratedDistribution::space_size(vocab, len), 0.0);
  for (const TokenSeq& s : samples) {
    if (s.vocab != vocab) throw PreconditionError("vocabulary mismatch in sample set");
    d.probs[d.index_of(s.tokens)] += 1.0;
  }
  for (double& p : d.probs) p /= static_cast<double>(samples.size());
  return d;
}

DenoiserOutput oracle_predict(const X0Model& model, const TokenSeq& xt, double mask_level) {
  if (model.vocab() != xt.vocab) throw PreconditionError("model/vocab mismatch");
  const std::size_t L = xt.size();
  const std::size_t V = static_cast<std::size_t>(xt.vocab);
  DenoiserOutput out;
  out.logits = Matrix(L, V);
  out.probs = Matrix(L, V);
  out.log_probs = Matrix(L, V);
  model.score(xt, mask_level, out.logits);
  for (std::size_t i = 0; i < L; ++i) {
    if (xt.is_masked(i)) {
      double m = -kInf;
      for (std::size_t v = 0; v < V; ++v) {
        const double s = out.logits.at(i, v);
        if (std::isnan(s) || s == kInf) throw ModelError("bad score in oracle softmax");
        if (s > m) m = s;
      }
      if (m == -kInf) throw ModelError("all tokens excluded in oracle softmax");
      double z = 0.0;
      for (std::size_t v = 0; v < V; ++v) z += std::exp(out.logits.at(i, v) - m);
      const double logz = std::log(z);
      for (std::size_t v = 0; v < V; ++v) {
        const double centered = out.logits.at(i, v) - m;
        out.probs.at(i, v) = std::exp(centered) / z;
        out.log_probs.at(i, v) = centered - logz;
      }
    } else {
      for (std::size_t v = 0; v < V; ++v) {
        const bool hit = static_cast<Token>(v) == xt[i];
        out.logits.at(i, v) = hit ? 0.0 : -kInf;
        out.probs.at(i, v) = hit ? 1.0 : 0.0;
        out.log_probs.at(i, v) = hit ? 0.0 : -kInf;
      }
    }
  }
  return out;
}

std::vector<double> general_posterior_row(std::span<const double> pi, std::size_t x0_tok,
                                          std::size_t xt_tok, double alpha_s, double alpha_t) {
  const std::size_t K = pi.size();
  if (K == 0) throw PreconditionError("empty base distribution");
  if (x0_tok >= K || xt_tok >= K) throw PreconditionError("state index out of range");
  if (!(alpha_s > 0.0) || !(alpha_t > 0.0) || alpha_s > 1.0 || alpha_t > alpha_s)
    throw PreconditionError("need 0 < alpha_t <= alpha_s <= 1");
  const double alpha_ts = alpha_t / alpha_s;
  std::vector<double> post(K);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double fwd = alpha_ts * (k == xt_tok ? 1.0 : 0.0) + (1.0 - alpha_ts) * pi[xt_tok];
    const double prior = alpha_s * (k == x0_tok ? 1.0 : 0.0) + (1.0 - alpha_s) * pi[k];
    post[k] = fwd * prior;
    total += post[k];
  }
  if (!(total > 0.0)) throw DomainError("posterior has zero mass at this (x0, xt)");
  for (double& p : post) p /= total;
  return post;
}

double exact_log_partition(const X0Model& model, const EnergyModel& energy, const TokenSeq& xt,
                           double t, const NoiseSchedule& sched) {
  const double mask_level = sched.mask_level(t);
  const DenoiserOutput mu = oracle_predict(model, xt, mask_level);
  return log_partition_impl(mu, energy, xt, t, mask_level);
}

EnumeratedDistribution exact_tilted_posterior(const X0Model& model, const EnergyModel& energy,
                                              const TokenSeq& xt, double t,
                                              const NoiseSchedule& sched) {
  const double mask_level = sched.mask_level(t);
  const DenoiserOutput mu = oracle_predict(model, xt, mask_level);
  const EnergyContext ctx{xt, t, mask_level, mu};
  return enumerate_logweights(xt.vocab, xt.size(), [&](const TokenSeq& x0) {
    double lw = 0.0;
    for (std::size_t i = 0; i < xt.size(); ++i) {
      if (!xt.is_masked(i)) {
        if (x0[i] != xt[i]) return -kInf;
        continue;
      }
      lw += mu.log_probs.at(i, static_cast<std::size_t>(x0[i]));
    }
    return lw - energy.energy(x0, ctx);
  });
}

double exact_bracket_mean(const X0Model& model, const EnergyModel& energy, const TokenSeq& x0,
                          double beta) {
  x0.validate();
  if (!x0.fully_unmasked()) throw PreconditionError("bracket mean needs a mask-free x0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw PreconditionError("beta outside [0, 1]");
  const std::size_t L = x0.size();
  if (L > 16) throw CapacityError("mask-pattern enumeration capped at 16 positions");
  double total = 0.0;
  TokenSeq xt = x0;
  for (std::uint64_t pattern = 1; pattern < (1ull << L); ++pattern) {
    double p_pat = 1.0;
    for (std::size_t i = 0; i < L; ++i) {
      const bool m = (pattern >> i) & 1u;
      xt.tokens[i] = m ? x0.mask_id() : x0[i];
      p_pat *= m ? beta : 1.0 - beta;
    }
    if (p_pat == 0.0) continue;
    const DenoiserOutput mu = oracle_predict(model, xt, beta);
    double term = 0.0;
    for (std::size_t i = 0; i < L; ++i)
      if ((pattern >> i) & 1u) term -= mu.log_probs.at(i, static_cast<std::size_t>(x0[i]));
    const EnergyContext ctx{xt, beta, beta, mu};
    const double e = energy.energy(x0, ctx);
    if (std::isnan(e)) throw ModelError("energy NaN in exact bracket");
    term += e + log_partition_impl(mu, energy, xt, beta, beta);
    total += p_pat * term;
  }
  if (std::isnan(total)) throw ModelError("NaN exact bracket mean");
  return total;
}

double exact_nelbo_continuous(const X0Model& model, const EnergyModel& energy,
                              const TokenSeq& x0, const NoiseSchedule& sched, int nodes) {
  if (nodes < 1) throw PreconditionError("quadrature needs nodes >= 1");
  const double eps = sched.eps;
  const QuadRule rule = gauss_legendre(nodes, eps, 1.0 - eps);
  double total = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double beta = rule.nodes[static_cast<std::size_t>(i)];
    total += rule.weights[static_cast<std::size_t>(i)] *
             exact_bracket_mean(model, energy, x0, beta) / beta;
  }
  // Clamp-region endcaps: below t with alpha = 1-eps the mask level is pinned
  // at eps, above it at 1-eps. Both integrate in closed form.
  total += exact_bracket_mean(model, energy, x0, eps);
  total += exact_bracket_mean(model, energy, x0, 1.0 - eps) * eps / (1.0 - eps);
  return total;
}

double exact_nelbo_discrete(const X0Model& model, const EnergyModel& energy, const TokenSeq& x0,
                            int T, const NoiseSchedule& sched) {
  if (T < 1) throw PreconditionError("discrete bound needs T >= 1");
  double total = 0.0;
  for (int i = 1; i <= T; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(T);
    const double s = static_cast<double>(i - 1) / static_cast<double>(T);
    const double w = (sched.alpha(s) - sched.alpha(t)) / (1.0 - sched.alpha(t));
    total += w * exact_bracket_mean(model, energy, x0, sched.mask_level(t));
  }
  return total;
}

QuadRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw PreconditionError("quadrature needs nodes >= 1");
  if (!(b > a)) throw PreconditionError("quadrature needs b > a");
  QuadRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  const double xm = 0.5 * (a + b);
  const double xl = 0.5 * (b - a);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Chebyshev-node initial guess, then Newton on P_n via the three-term
    // recurrence.
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - static_cast<double>(j) * p2) /
             (static_cast<double>(j) + 1.0);
      }
      pp = static_cast<double>(n) * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[static_cast<std::size_t>(i)] = xm - xl * x;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = xm + xl * x;
    const double w = 2.0 * xl / ((1.0 - x * x) * pp * pp);
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return rule;
}

EnumeratedPosteriorModel::EnumeratedPosteriorModel(EnumeratedDistribution prior)
    : prior_(std::move(prior)) {
  if (prior_.probs.size() != EnumeratedDistribution::space_size(prior_.vocab, prior_.len))
    throw PreconditionError("prior table size does not match its space");
}

void EnumeratedPosteriorModel::score(const TokenSeq& xt, double /*mask_level*/,
                                     Matrix& logits) const {
  if (xt.vocab != prior_.vocab || xt.size() != prior_.len)
    throw PreconditionError("xt does not live in the prior's space");
  const std::size_t V = static_cast<std::size_t>(prior_.vocab);
  Matrix marg(xt.size(), V, 0.0);
  double mass = 0.0;
  for (std::size_t idx = 0; idx < prior_.probs.size(); ++idx) {
    const double p = prior_.probs[idx];
    if (p == 0.0) continue;
    const std::vector<Token> seq = prior_.seq_at(idx);
    bool ok = true;
    for (std::size_t i = 0; i < xt.size(); ++i)
      if (!xt.is_masked(i) && seq[i] != xt[i]) {
        ok = false;
        break;
      }
    if (!ok) continue;
    mass += p;
    for (std::size_t i = 0; i < xt.size(); ++i)
      if (xt.is_masked(i)) marg.at(i, static_cast<std::size_t>(seq[i])) += p;
  }
  if (!(mass > 0.0)) throw ModelError("xt has no completion under the prior");
  for (std::size_t i = 0; i < xt.size(); ++i) {
    if (!xt.is_masked(i)) continue;
    for (std::size_t v = 0; v < V; ++v) {
      const double m = marg.at(i, v);
      logits.at(i, v) = m > 0.0 ? std::log(m) : -kInf;
    }
  }
}

}  // namespace ebdiff::oracle
