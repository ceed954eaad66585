#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ebdiff/diffusion.hpp"
#include "ebdiff/energy.hpp"
#include "ebdiff/rng.hpp"
#include "ebdiff/schedule.hpp"
#include "ebdiff/types.hpp"

namespace ebdiff {

// Importance-sampling bracket for log Z(x_t) = log E_mu[exp(-E)] from n draws
// x0_i ~ mu(.|x_t): lower is the plain log-mean-exp estimator (<= log Z in
// expectation by Jensen), upper combines it with the mean leave-one-out
// estimator, (2n-1) log Z_n - 2(n-1) mean_j log Z_{n-1}^(-j) (>= log Z
// asymptotically). upper >= lower holds deterministically for n >= 2.
struct BoundPair {
  double lower = 0.0;
  double upper = 0.0;
  int n = 0;
  double variance = 0.0;  // jackknife variance estimate of the lower estimator
};

BoundPair log_partition_bounds(const X0Model& model, const EnergyModel& energy,
                               const TokenSeq& xt, double t, const NoiseSchedule& sched, int n,
                               const RngStream& rng);

// Same bracket computed from already-drawn candidate energies.
BoundPair log_partition_bounds_from_energies(std::span<const double> energies);

// Monte Carlo estimate with a standard error; se is the conservative iid-style
// estimate (for stratified draws it overestimates, never under).
struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
  int samples = 0;
};

struct NelboConfig {
  int mc_samples = 256;
  int partition_n = 64;   // draws per log-Z bracket when the energy is not self-normalized
  bool stratified = true; // continuous estimator only
};

// T-step bound, Sum_i (alpha_{s_i} - alpha_{t_i})/(1 - alpha_{t_i}) *
// [-log mu(x0|x_t) + E + logZhat] with t_i = i/T, averaged over one forward
// draw x_{t_i} per level per Monte Carlo replicate. Self-normalized energies use
// logZhat = 0 exactly; others the upper bracket estimator.
McEstimate nelbo_discrete(const X0Model& model, const EnergyModel& energy, const TokenSeq& x0,
                          int T, const NoiseSchedule& sched, const NelboConfig& cfg,
                          const RngStream& rng);

// Continuous-time bound, E_t (-alpha'(t))/(1 - alpha(t)) * [same bracket],
// t stratified over [0,1) by default (plain uniform when cfg.stratified=false).
McEstimate nelbo_continuous(const X0Model& model, const EnergyModel& energy, const TokenSeq& x0,
                            const NoiseSchedule& sched, const NelboConfig& cfg,
                            const RngStream& rng);

// Effective sample size of k candidate energies. The default converts energies
// to normalized importance weights w = softmax(-e) and returns 1 / sum w^2; the
// raw variant normalizes the energies themselves (e_hat = e / sum e) as written
// in the source appendix, kept behind this flag for comparison.
enum class EssMode { importance_weights, raw_energies };
double ess(std::span<const double> energies, EssMode mode = EssMode::importance_weights);

double bpc_from_nelbo(double nelbo_nats, std::size_t tokens);
double ppl_from_nelbo(double nelbo_nats, std::size_t tokens);

// One evaluated document (or the sample-set aggregate for generative metrics).
// Fields that do not apply to a row are NaN.
struct MetricsRow {
  double nelbo = 0.0;   // nats per token
  double bpc = 0.0;
  double ppl = 0.0;
  double gen_ppl = 0.0;
  double entropy = 0.0;
  double ess = 0.0;
};

struct CorpusEvalConfig {
  std::size_t chunk_len = 64;
  NelboConfig nelbo;
  bool continuous = true;  // continuous-time bound by default; discrete_T otherwise
  int discrete_T = 8;
};

// Splits the corpus into consecutive chunk_len-token documents (remainder
// dropped) and evaluates the per-token NELBO upper bound on each. The ess
// column is the mean candidate-weight ESS across the document's partition
// brackets (NaN for self-normalized energies, which need none).
std::vector<MetricsRow> corpus_metrics(const X0Model& model, const EnergyModel& energy,
                                       std::span<const Token> corpus,
                                       const NoiseSchedule& sched, const CorpusEvalConfig& cfg,
                                       const RngStream& rng);

// Oracle-model quality of a sample set: gen_ppl = exp(mean oracle NLL per
// token), entropy = empirical per-token entropy of the pooled samples (nats).
// nll_mean/nll_se keep the per-sequence statistics for significance tests.
struct GenerativeMetrics {
  double gen_ppl = 0.0;
  double entropy = 0.0;
  double nll_mean = 0.0;  // per token
  double nll_se = 0.0;
  std::size_t sequences = 0;
};

GenerativeMetrics generative_metrics(std::span<const TokenSeq> samples, const ARModel& oracle);

}  // namespace ebdiff
