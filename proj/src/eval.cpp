#include "ebdiff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "ebdiff/errors.hpp"
#include "ebdiff/kernels.hpp"

namespace ebdiff {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(std::span<const double> values) {
  const std::size_t n = values.size();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  if (n < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) {
    const double d = v - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

// Running mean of per-bracket candidate ESS, for the corpus metrics column.
struct EssAccum {
  double sum = 0.0;
  std::size_t count = 0;

  double mean() const { return count == 0 ? kNaN : sum / static_cast<double>(count); }
};

// One bracket term -log mu(x0|x_t) + E(x0,x_t,t) + logZhat at a forward draw
// x_t. Self-normalized energies have logZhat = 0 exactly; otherwise the upper
// partition estimate from partition_n fresh candidates. A fully unmasked x_t
// makes the term vanish identically, so it is skipped outright.
double tilted_term(const X0Model& model, const EnergyModel& energy, const TokenSeq& x0,
                   const TokenSeq& xt, double t, const NoiseSchedule& sched, int partition_n,
                   const RngStream& partition_rng, EssAccum* acc) {
  if (xt.masked_count() == 0) return 0.0;
  const DenoiserOutput mu = factorized_predict(model, xt, t, sched);
  const EnergyContext ctx{xt, t, sched.mask_level(t), mu};
  double term = -factorized_logprob(xt, mu, x0) + energy.energy(x0, ctx);
  if (!energy.is_self_normalized()) {
    std::vector<double> energies(static_cast<std::size_t>(partition_n));
    for (int i = 0; i < partition_n; ++i) {
      RngStream cand = partition_rng.child_indexed("candidate", static_cast<std::uint64_t>(i));
      const TokenSeq draw = draw_x0(xt, mu, cand);
      const double e = energy.energy(draw, ctx);
      if (std::isnan(e)) throw ModelError("energy returned NaN during partition estimate");
      energies[static_cast<std::size_t>(i)] = e;
    }
    term += log_partition_bounds_from_energies(energies).upper;
    if (acc != nullptr) {
      acc->sum += ess(energies);
      acc->count += 1;
    }
  }
  if (std::isnan(term)) throw ModelError("non-finite likelihood-bound term");
  return term;
}

void check_nelbo_args(const TokenSeq& x0, const NelboConfig& cfg) {
  x0.validate();
  if (!x0.fully_unmasked()) throw PreconditionError("likelihood bound needs a mask-free x0");
  if (cfg.mc_samples < 1) throw PreconditionError("mc_samples must be >= 1");
  if (cfg.partition_n < 1) throw PreconditionError("partition_n must be >= 1");
}

McEstimate nelbo_discrete_impl(const X0Model& model, const EnergyModel& energy,
                               const TokenSeq& x0, int T, const NoiseSchedule& sched,
                               const NelboConfig& cfg, const RngStream& rng, EssAccum* acc) {
  check_nelbo_args(x0, cfg);
  if (T < 1) throw PreconditionError("discrete bound needs T >= 1");
  std::vector<double> values(static_cast<std::size_t>(cfg.mc_samples));
  for (int r = 0; r < cfg.mc_samples; ++r) {
    RngStream rep = rng.child_indexed("rep", static_cast<std::uint64_t>(r));
    double total = 0.0;
    for (int i = 1; i <= T; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(T);
      const double s = static_cast<double>(i - 1) / static_cast<double>(T);
      const double w = (sched.alpha(s) - sched.alpha(t)) / (1.0 - sched.alpha(t));
      RngStream level = rep.child_indexed("level", static_cast<std::uint64_t>(i));
      RngStream fwd = level.child("forward");
      const TokenSeq xt = forward_sample(x0, t, sched, fwd);
      total += w * tilted_term(model, energy, x0, xt, t, sched, cfg.partition_n,
                               level.child("partition"), acc);
    }
    values[static_cast<std::size_t>(r)] = total;
  }
  const MeanSe ms = mean_se(values);
  return {ms.mean, ms.se, cfg.mc_samples};
}

McEstimate nelbo_continuous_impl(const X0Model& model, const EnergyModel& energy,
                                 const TokenSeq& x0, const NoiseSchedule& sched,
                                 const NelboConfig& cfg, const RngStream& rng, EssAccum* acc) {
  check_nelbo_args(x0, cfg);
  const int R = cfg.mc_samples;
  std::vector<double> values(static_cast<std::size_t>(R));
  for (int r = 0; r < R; ++r) {
    RngStream rep = rng.child_indexed("rep", static_cast<std::uint64_t>(r));
    RngStream time = rep.child("time");
    const double u = time.next_double();
    const double t =
        cfg.stratified ? (static_cast<double>(r) + u) / static_cast<double>(R) : u;
    const double w = -sched.alpha_prime(t) / (1.0 - sched.alpha(t));
    RngStream fwd = rep.child("forward");
    const TokenSeq xt = forward_sample(x0, t, sched, fwd);
    values[static_cast<std::size_t>(r)] = w * tilted_term(model, energy, x0, xt, t, sched,
                                                          cfg.partition_n,
                                                          rep.child("partition"), acc);
  }
  const MeanSe ms = mean_se(values);
  return {ms.mean, ms.se, R};
}

}  // namespace

BoundPair log_partition_bounds_from_energies(std::span<const double> energies) {
  const std::size_t n = energies.size();
  if (n == 0) throw PreconditionError("partition bracket needs at least one energy");
  std::vector<double> lw(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(energies[i])) throw ModelError("energy NaN in partition bracket");
    lw[i] = -energies[i];
  }
  const double lse = kernels::log_sum_exp(lw);
  const double logn = std::log(static_cast<double>(n));
  BoundPair out;
  out.n = static_cast<int>(n);
  out.lower = lse - logn;
  if (lse == -kInf || n == 1) {
    out.upper = out.lower;
    return out;
  }

  // Leave-one-out estimates log Z_{n-1}^(-j). The log1p route loses precision
  // when sample j holds essentially all the weight, so that case recomputes the
  // reduced log-sum-exp directly.
  const double logn1 = std::log(static_cast<double>(n - 1));
  std::vector<double> loo(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double r = lw[j] - lse;
    double reduced;
    if (lw[j] == -kInf) {
      reduced = lse;
    } else if (r < -1e-6) {
      reduced = lse + std::log1p(-std::exp(r));
    } else {
      double m = -kInf;
      for (std::size_t i = 0; i < n; ++i)
        if (i != j) m = std::max(m, lw[i]);
      if (m == -kInf) {
        reduced = -kInf;
      } else {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          if (i != j) s += std::exp(lw[i] - m);
        reduced = m + std::log(s);
      }
    }
    loo[j] = reduced - logn1;
  }
  // A leave-one-out subset can carry zero mass when all weight sits on one
  // draw; the realized upper bound is then vacuous rather than NaN.
  for (double v : loo) {
    if (v == -kInf) {
      out.upper = kInf;
      out.variance = kInf;
      return out;
    }
  }
  double loo_mean = 0.0;
  for (double v : loo) loo_mean += v;
  loo_mean /= static_cast<double>(n);
  out.upper = (2.0 * static_cast<double>(n) - 1.0) * out.lower -
              2.0 * static_cast<double>(n - 1) * loo_mean;
  double ss = 0.0;
  for (double v : loo) {
    const double d = v - loo_mean;
    ss += d * d;
  }
  out.variance = ss * static_cast<double>(n - 1) / static_cast<double>(n);
  // Jensen on the log of the leave-one-out means guarantees the ordering; only
  // floating-point noise could flip it, and that must not reach callers.
  out.upper = std::max(out.upper, out.lower);
  return out;
}

BoundPair log_partition_bounds(const X0Model& model, const EnergyModel& energy,
                               const TokenSeq& xt, double t, const NoiseSchedule& sched, int n,
                               const RngStream& rng) {
  if (n < 1) throw PreconditionError("partition bracket needs n >= 1");
  const DenoiserOutput mu = factorized_predict(model, xt, t, sched);
  const EnergyContext ctx{xt, t, sched.mask_level(t), mu};
  std::vector<double> energies(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    RngStream cand = rng.child_indexed("candidate", static_cast<std::uint64_t>(i));
    const TokenSeq x0 = draw_x0(xt, mu, cand);
    const double e = energy.energy(x0, ctx);
    if (std::isnan(e)) throw ModelError("energy returned NaN during partition estimate");
    energies[static_cast<std::size_t>(i)] = e;
  }
  return log_partition_bounds_from_energies(energies);
}

McEstimate nelbo_discrete(const X0Model& model, const EnergyModel& energy, const TokenSeq& x0,
                          int T, const NoiseSchedule& sched, const NelboConfig& cfg,
                          const RngStream& rng) {
  return nelbo_discrete_impl(model, energy, x0, T, sched, cfg, rng, nullptr);
}

McEstimate nelbo_continuous(const X0Model& model, const EnergyModel& energy, const TokenSeq& x0,
                            const NoiseSchedule& sched, const NelboConfig& cfg,
                            const RngStream& rng) {
  return nelbo_continuous_impl(model, energy, x0, sched, cfg, rng, nullptr);
}

double ess(std::span<const double> energies, EssMode mode) {
  if (energies.empty()) throw PreconditionError("ess needs at least one energy");
  if (mode == EssMode::importance_weights) {
    std::vector<double> neg(energies.size());
    for (std::size_t i = 0; i < energies.size(); ++i) {
      if (std::isnan(energies[i])) throw ModelError("energy NaN in ess");
      neg[i] = -energies[i];
    }
    std::vector<double> w(energies.size());
    kernels::softmax(neg, w);
    double s2 = 0.0;
    for (double v : w) s2 += v * v;
    return 1.0 / s2;
  }
  double s = 0.0, s2 = 0.0;
  for (double e : energies) {
    if (std::isnan(e)) throw ModelError("energy NaN in ess");
    s += e;
    s2 += e * e;
  }
  if (s2 == 0.0) throw DomainError("raw ess undefined for all-zero energies");
  return s * s / s2;
}

double bpc_from_nelbo(double nelbo_nats, std::size_t tokens) {
  if (tokens == 0) throw PreconditionError("bpc needs tokens >= 1");
  return nelbo_nats / (static_cast<double>(tokens) * std::log(2.0));
}

double ppl_from_nelbo(double nelbo_nats, std::size_t tokens) {
  if (tokens == 0) throw PreconditionError("ppl needs tokens >= 1");
  return std::exp(nelbo_nats / static_cast<double>(tokens));
}

std::vector<MetricsRow> corpus_metrics(const X0Model& model, const EnergyModel& energy,
                                       std::span<const Token> corpus,
                                       const NoiseSchedule& sched, const CorpusEvalConfig& cfg,
                                       const RngStream& rng) {
  if (cfg.chunk_len == 0) throw PreconditionError("chunk_len must be >= 1");
  const std::size_t docs = corpus.size() / cfg.chunk_len;
  if (docs == 0) throw DataError("corpus shorter than one evaluation chunk");
  std::vector<MetricsRow> rows;
  rows.reserve(docs);
  for (std::size_t d = 0; d < docs; ++d) {
    TokenSeq x0;
    x0.vocab = model.vocab();
    x0.tokens.assign(corpus.begin() + static_cast<std::ptrdiff_t>(d * cfg.chunk_len),
                     corpus.begin() + static_cast<std::ptrdiff_t>((d + 1) * cfg.chunk_len));
    EssAccum acc;
    RngStream doc_rng = rng.child_indexed("doc", d);
    const McEstimate est =
        cfg.continuous
            ? nelbo_continuous_impl(model, energy, x0, sched, cfg.nelbo, doc_rng, &acc)
            : nelbo_discrete_impl(model, energy, x0, cfg.discrete_T, sched, cfg.nelbo, doc_rng,
                                  &acc);
    MetricsRow row;
    row.nelbo = est.mean / static_cast<double>(cfg.chunk_len);
    row.bpc = bpc_from_nelbo(est.mean, cfg.chunk_len);
    row.ppl = ppl_from_nelbo(est.mean, cfg.chunk_len);
    row.gen_ppl = kNaN;
    row.entropy = kNaN;
    row.ess = energy.is_self_normalized() ? kNaN : acc.mean();
    rows.push_back(row);
  }
  return rows;
}

GenerativeMetrics generative_metrics(std::span<const TokenSeq> samples, const ARModel& oracle) {
  if (samples.empty()) throw PreconditionError("generative metrics need at least one sample");
  std::vector<double> nll(samples.size());
  std::vector<std::size_t> hist(static_cast<std::size_t>(oracle.vocab()), 0);
  std::size_t total_tokens = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const TokenSeq& s = samples[i];
    if (s.tokens.empty()) throw PreconditionError("empty sample sequence");
    nll[i] = -oracle.logprob(s) / static_cast<double>(s.tokens.size());
    for (Token tok : s.tokens) hist[static_cast<std::size_t>(tok)] += 1;
    total_tokens += s.tokens.size();
  }
  GenerativeMetrics out;
  const MeanSe ms = mean_se(nll);
  out.nll_mean = ms.mean;
  out.nll_se = ms.se;
  out.gen_ppl = std::exp(ms.mean);
  out.sequences = samples.size();
  double h = 0.0;
  for (std::size_t c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total_tokens);
    h -= p * std::log(p);
  }
  out.entropy = h;
  return out;
}

}  // namespace ebdiff
