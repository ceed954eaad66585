#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ebdiff/diffusion.hpp"
#include "ebdiff/energy.hpp"
#include "ebdiff/types.hpp"

// Brute-force reference implementations for validation. Everything here
// enumerates state spaces outright and recomputes the arithmetic with its own
// scalar loops (no ebdiff::kernels, no production softmax), so agreement
// between a production routine and its oracle twin is meaningful evidence, not
// the same code exercised twice. Costs are exponential by design; the
// kMaxStates cap keeps misuse loud.
namespace ebdiff::oracle {

// Scalar log-sum-exp, independent of the kernels backend.
double logsumexp(std::span<const double> x);

// Dense distribution over every length-len sequence on vocab data tokens.
// Sequences index in lexicographic order, position 0 most significant.
struct EnumeratedDistribution {
  Token vocab = 0;
  std::size_t len = 0;
  std::vector<double> probs;

  static constexpr std::size_t kMaxStates = 15625;  // 5^6
  static std::size_t space_size(Token vocab, std::size_t len);

  std::size_t index_of(std::span<const Token> seq) const;
  std::vector<Token> seq_at(std::size_t index) const;
  double prob_of(const TokenSeq& seq) const;

  double tv(const EnumeratedDistribution& other) const;  // total variation distance
  double entropy() const;                                 // nats
};

// Normalizes exp(logw(x)) over the whole space; logw may return -inf.
EnumeratedDistribution enumerate_logweights(
    Token vocab, std::size_t len, const std::function<double(const TokenSeq&)>& logw);

// Empirical distribution of a sample set (all sequences must be mask-free,
// length len, vocabulary vocab).
EnumeratedDistribution empirical(Token vocab, std::size_t len,
                                 std::span<const TokenSeq> samples);

// Factorized predictor output for xt recomputed with scalar softmax rows.
DenoiserOutput oracle_predict(const X0Model& model, const TokenSeq& xt, double mask_level);

// Single-position posterior q(x_s | x_t, x0) for the general forward kernel
// q(x_t | x0) = Cat(alpha_t x0 + (1 - alpha_t) pi), evaluated by directly
// multiplying the two kernel factors over all pi.size() states and
// normalizing. The absorbing chain is pi = one-hot at the mask id.
std::vector<double> general_posterior_row(std::span<const double> pi, std::size_t x0_tok,
                                          std::size_t xt_tok, double alpha_s, double alpha_t);

// log sum over all completions x0 of xt of mu(x0|xt) exp(-E(x0, xt, t)), with
// mu recomputed by oracle_predict. Enumerates vocab^(masked positions) terms.
double exact_log_partition(const X0Model& model, const EnergyModel& energy, const TokenSeq& xt,
                           double t, const NoiseSchedule& sched);

// Tilted completion posterior p(x0|xt) proportional to mu(x0|xt) exp(-E), as a
// distribution over the full sequence space (zero off the completion set).
EnumeratedDistribution exact_tilted_posterior(const X0Model& model, const EnergyModel& energy,
                                              const TokenSeq& xt, double t,
                                              const NoiseSchedule& sched);

// Exact expectation over x_t ~ q(.|x0, mask prob beta) of the bound bracket
// -log mu(x0|x_t) + E + exact log Z. Enumerates all 2^len mask patterns
// (len <= 16). Valid for energies that read time only through the mask level;
// the context's t field is filled with the linear-schedule time (== beta).
double exact_bracket_mean(const X0Model& model, const EnergyModel& energy, const TokenSeq& x0,
                          double beta);

// Exact continuous-time negative bound for the whole sequence (nats): the
// integral of (-alpha'/(1-alpha)) * exact_bracket_mean over t in [0,1], with
// the same alpha clamping convention as the Monte Carlo estimator. After a
// change of variables this is schedule-independent:
//   integral_eps^{1-eps} exact_bracket_mean(beta)/beta dbeta
//     + exact_bracket_mean(eps) + exact_bracket_mean(1-eps) * eps/(1-eps),
// integrated by Gauss-Legendre quadrature with `nodes` points.
double exact_nelbo_continuous(const X0Model& model, const EnergyModel& energy,
                              const TokenSeq& x0, const NoiseSchedule& sched, int nodes = 64);

// Exact expectation of the T-step bound with exact log Z in the bracket. This
// is the exact mean of the discrete estimator whenever the energy is
// self-normalized (so the estimator never estimates a partition function).
double exact_nelbo_discrete(const X0Model& model, const EnergyModel& energy, const TokenSeq& x0,
                            int T, const NoiseSchedule& sched);

// Gauss-Legendre nodes and weights on [a, b] (Newton iteration on Legendre
// polynomials; exposed for reuse and for testing the quadrature itself).
struct QuadRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
QuadRule gauss_legendre(int n, double a, double b);

// X0Model whose score rows are the exact per-position completion marginals of
// a reference distribution given xt: the best factorized predictor for that
// reference. mask_level is ignored. Scores are log-marginals; positions with
// no consistent completion throw.
class EnumeratedPosteriorModel final : public X0Model {
 public:
  explicit EnumeratedPosteriorModel(EnumeratedDistribution prior);

  Token vocab() const override { return prior_.vocab; }
  void score(const TokenSeq& xt, double mask_level, Matrix& logits) const override;
  const EnumeratedDistribution& prior() const { return prior_; }

 private:
  EnumeratedDistribution prior_;
};

}  // namespace ebdiff::oracle
