#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "ebdiff/diffusion.hpp"
#include "ebdiff/errors.hpp"
#include "ebdiff/oracle.hpp"
#include "ebdiff/rng.hpp"
#include "ebdiff/schedule.hpp"
#include "support/fixtures.hpp"

using namespace ebdiff;

namespace {

// The absorbing chain as a special case of the general forward kernel: pi is
// the one-hot at the mask id over the V+1 extended states.
std::vector<double> mask_onehot(Token vocab) {
  std::vector<double> pi(static_cast<std::size_t>(vocab) + 1, 0.0);
  pi.back() = 1.0;
  return pi;
}

}  // namespace

TEST_CASE("posterior matches the general-kernel oracle row") {
  NoiseSchedule sched;
  RngStream rng(401);
  for (int rep = 0; rep < 300; ++rep) {
    Token V = 2 + static_cast<Token>(rng.next_u64() % 5);
    std::vector<double> pi = mask_onehot(V);
    Token x0_tok = static_cast<Token>(rng.next_u64() % static_cast<std::uint64_t>(V));
    bool masked = rng.next_double() < 0.7;
    double t = 0.05 + 0.9 * rng.next_double();
    double s = t * rng.next_double();

    TokenSeq x0({x0_tok}, V);
    TokenSeq xt({masked ? V : x0_tok}, V);
    PosteriorStep step = posterior(x0, xt, s, t, sched);

    std::vector<double> row = oracle::general_posterior_row(
        pi, static_cast<std::size_t>(x0_tok), static_cast<std::size_t>(xt[0]), sched.alpha(s),
        sched.alpha(t));
    // production decomposition: mass on reveal_token and on mask, zero elsewhere
    for (std::size_t k = 0; k <= static_cast<std::size_t>(V); ++k) {
      double want = row[k];
      double got = 0.0;
      if (static_cast<Token>(k) == step.reveal_token[0]) got += step.p_reveal[0];
      if (static_cast<Token>(k) == V) got += step.p_mask[0];
      CHECK(std::abs(got - want) <= 1e-12);
    }
  }
}

TEST_CASE("posterior closed form on masked positions") {
  NoiseSchedule sched;
  TokenSeq x0({1, 0}, 3);
  TokenSeq xt({3, 0}, 3);  // position 0 masked, position 1 carried
  double s = 0.3, t = 0.8;
  PosteriorStep step = posterior(x0, xt, s, t, sched);
  double want = (sched.alpha(s) - sched.alpha(t)) / (1.0 - sched.alpha(t));
  CHECK(step.p_reveal[0] == doctest::Approx(want).epsilon(1e-14));
  CHECK(step.p_mask[0] == doctest::Approx(1.0 - want).epsilon(1e-14));
  CHECK(step.reveal_token[0] == 1);
  // carried position is the deterministic copy branch
  CHECK(step.p_reveal[1] == 1.0);
  CHECK(step.p_mask[1] == 0.0);
  CHECK(step.reveal_token[1] == 0);
}

TEST_CASE("posterior degenerate transition s == t") {
  NoiseSchedule sched;
  TokenSeq x0({2}, 3);
  TokenSeq xt = TokenSeq::all_masked(1, 3);
  PosteriorStep step = posterior(x0, xt, 0.6, 0.6, sched);
  CHECK(step.p_reveal[0] == 0.0);
  CHECK(step.p_mask[0] == 1.0);
}

TEST_CASE("posterior input validation") {
  NoiseSchedule sched;
  TokenSeq x0({1, 2}, 3);
  TokenSeq xt({1, 3}, 3);
  CHECK_THROWS_AS((void)posterior(x0, xt, 0.7, 0.3, sched), DomainError);
  TokenSeq masked_x0({3, 2}, 3);
  CHECK_THROWS_AS((void)posterior(masked_x0, xt, 0.2, 0.5, sched), PreconditionError);
  TokenSeq mismatched({2, 2}, 3);  // xt carries 1 at position 0 where x0 has 2
  TokenSeq xt2({1, 3}, 3);
  CHECK_THROWS_AS((void)posterior(mismatched, xt2, 0.2, 0.5, sched), InconsistentPairError);
}

TEST_CASE("forward_sample mask rate follows the schedule") {
  NoiseSchedule sched;
  RngStream rng = RngStream(17).child("fwd");
  const std::size_t L = 2000;
  TokenSeq x0 = ebtest::random_x0(4, L, rng);
  for (double t : {0.25, 0.6}) {
    RngStream draw = rng.child_indexed("t", static_cast<std::uint64_t>(t * 100));
    std::size_t masked = 0;
    const int reps = 10;
    for (int r = 0; r < reps; ++r) {
      RngStream rr = draw.child_indexed("rep", r);
      TokenSeq xt = forward_sample(x0, t, sched, rr);
      masked += xt.masked_count();
      // survivors keep their identity
      for (std::size_t i = 0; i < L; ++i)
        if (!xt.is_masked(i)) CHECK(xt[i] == x0[i]);
    }
    std::size_t counts[2] = {masked, reps * L - masked};
    double p[2] = {1.0 - sched.alpha(t), sched.alpha(t)};
    CHECK(ebtest::chi2_stat(counts, p) < ebtest::kChi2Df1P999);
  }
}

TEST_CASE("forward_extend composes to the full-time marginal") {
  NoiseSchedule sched;
  RngStream rng = RngStream(99).child("compose");
  const std::size_t L = 4000;
  TokenSeq x0 = ebtest::random_x0(3, L, rng);
  double s = 0.3, t = 0.7;
  RngStream r1 = rng.child("stage1");
  RngStream r2 = rng.child("stage2");
  TokenSeq xs = forward_sample(x0, s, sched, r1);
  TokenSeq xt = forward_extend(xs, s, t, sched, r2);
  // already-masked positions must stay masked
  for (std::size_t i = 0; i < L; ++i)
    if (xs.is_masked(i)) CHECK(xt.is_masked(i));
  std::size_t m = xt.masked_count();
  std::size_t counts[2] = {m, L - m};
  double p[2] = {1.0 - sched.alpha(t), sched.alpha(t)};
  CHECK(ebtest::chi2_stat(counts, p) < ebtest::kChi2Df1P999);
}

TEST_CASE("posterior_sample respects reveal probabilities") {
  NoiseSchedule sched;
  TokenSeq x0({1}, 2);
  TokenSeq xt = TokenSeq::all_masked(1, 2);
  double s = 0.35, t = 0.9;
  PosteriorStep step = posterior(x0, xt, s, t, sched);
  RngStream rng = RngStream(7).child("post");
  std::size_t reveal = 0;
  const int n = 6000;
  for (int i = 0; i < n; ++i) {
    RngStream ri = rng.child_indexed("draw", i);
    TokenSeq xs = posterior_sample(xt, step, ri);
    if (!xs.is_masked(0)) {
      CHECK(xs[0] == 1);
      ++reveal;
    }
  }
  std::size_t counts[2] = {reveal, static_cast<std::size_t>(n) - reveal};
  double p[2] = {step.p_reveal[0], step.p_mask[0]};
  CHECK(ebtest::chi2_stat(counts, p) < ebtest::kChi2Df1P999);
}

TEST_CASE("factorized_predict structure") {
  NoiseSchedule sched;
  FactorizedDenoiser model = ebtest::random_denoiser(4, 1, 31);
  RngStream rng(5);
  TokenSeq xt = ebtest::random_xt(4, 12, 0.5, rng);
  double t = 0.55;
  DenoiserOutput mu = factorized_predict(model, xt, t, sched);
  REQUIRE(mu.probs.rows() == 12);
  REQUIRE(mu.probs.cols() == 4);
  for (std::size_t i = 0; i < xt.size(); ++i) {
    double sum = 0.0;
    for (std::size_t v = 0; v < 4; ++v) sum += mu.probs.at(i, v);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    if (!xt.is_masked(i)) {
      // copy branch: a one-hot at the observed token
      CHECK(mu.probs.at(i, static_cast<std::size_t>(xt[i])) == 1.0);
      CHECK(mu.log_probs.at(i, static_cast<std::size_t>(xt[i])) == 0.0);
    } else {
      for (std::size_t v = 0; v < 4; ++v) {
        CHECK(mu.probs.at(i, v) > 0.0);
        CHECK(mu.log_probs.at(i, v) ==
              doctest::Approx(std::log(mu.probs.at(i, v))).epsilon(1e-12));
      }
    }
  }
  // matches the oracle's scalar softmax recomputation
  DenoiserOutput ref = oracle::oracle_predict(model, xt, sched.mask_level(t));
  for (std::size_t i = 0; i < xt.size(); ++i)
    for (std::size_t v = 0; v < 4; ++v)
      CHECK(std::abs(mu.probs.at(i, v) - ref.probs.at(i, v)) < 1e-12);
}

TEST_CASE("draw_x0 copies carried tokens and fills masks") {
  NoiseSchedule sched;
  FactorizedDenoiser model = ebtest::random_denoiser(3, 1, 77);
  RngStream rng(6);
  TokenSeq xt = ebtest::random_xt(3, 10, 0.6, rng);
  DenoiserOutput mu = factorized_predict(model, xt, 0.6, sched);
  RngStream d1 = rng.child("draw");
  RngStream d2 = rng.child("draw");
  TokenSeq a = draw_x0(xt, mu, d1);
  TokenSeq b = draw_x0(xt, mu, d2);
  CHECK(a == b);  // same stream, same draw
  CHECK(a.fully_unmasked());
  for (std::size_t i = 0; i < xt.size(); ++i)
    if (!xt.is_masked(i)) CHECK(a[i] == xt[i]);
}

TEST_CASE("draw_x0 per-position frequencies match mu") {
  NoiseSchedule sched;
  FactorizedDenoiser model = ebtest::random_denoiser(3, 0, 13, 1.0);
  TokenSeq xt = TokenSeq::all_masked(1, 3);
  DenoiserOutput mu = factorized_predict(model, xt, 0.8, sched);
  RngStream rng = RngStream(8).child("freq");
  std::vector<std::size_t> counts(3, 0);
  const int n = 9000;
  for (int i = 0; i < n; ++i) {
    RngStream ri = rng.child_indexed("draw", i);
    ++counts[static_cast<std::size_t>(draw_x0(xt, mu, ri)[0])];
  }
  std::vector<double> p(3);
  for (std::size_t v = 0; v < 3; ++v) p[v] = mu.probs.at(0, v);
  // df = 2; 13.816 is the 0.001 tail
  CHECK(ebtest::chi2_stat(counts, p) < 13.816);
}

TEST_CASE("factorized_logprob sums masked rows only") {
  NoiseSchedule sched;
  FactorizedDenoiser model = ebtest::random_denoiser(4, 1, 21);
  RngStream rng(9);
  TokenSeq x0 = ebtest::random_x0(4, 8, rng);
  TokenSeq xt = forward_sample(x0, 0.5, sched, rng);
  DenoiserOutput mu = factorized_predict(model, xt, 0.5, sched);
  double lp = factorized_logprob(xt, mu, x0);
  double want = 0.0;
  for (std::size_t i = 0; i < xt.size(); ++i)
    if (xt.is_masked(i)) want += mu.log_probs.at(i, static_cast<std::size_t>(x0[i]));
  CHECK(lp == doctest::Approx(want).epsilon(1e-14));
  // no masks: identically zero
  DenoiserOutput mu0 = factorized_predict(model, x0, 0.5, sched);
  CHECK(factorized_logprob(x0, mu0, x0) == 0.0);
}

TEST_CASE("reverse_step reveals toward the predictor") {
  NoiseSchedule sched;
  // point-mass prior: the exact predictor puts all mass on one sequence
  oracle::EnumeratedDistribution prior;
  prior.vocab = 2;
  prior.len = 3;
  prior.probs.assign(8, 0.0);
  std::vector<Token> target{1, 0, 1};
  prior.probs[prior.index_of(target)] = 1.0;
  oracle::EnumeratedPosteriorModel model(std::move(prior));

  TokenSeq xt = TokenSeq::all_masked(3, 2);
  DenoiserOutput mu = factorized_predict(model, xt, 0.9, sched);
  RngStream rng(33);
  TokenSeq xs = reverse_step(xt, mu, 0.2, 0.9, sched, rng);
  for (std::size_t i = 0; i < 3; ++i)
    if (!xs.is_masked(i)) CHECK(xs[i] == target[i]);
  // committing at the end: draw_x0 returns the target exactly
  RngStream rng2(34);
  CHECK(draw_x0(xt, mu, rng2).tokens == target);
}

TEST_CASE("non-finite scores are rejected") {
  NoiseSchedule sched;
  struct BadModel final : X0Model {
    double bad;
    explicit BadModel(double b) : bad(b) {}
    Token vocab() const override { return 2; }
    void score(const TokenSeq& xt, double, Matrix& logits) const override {
      for (std::size_t i = 0; i < xt.size(); ++i)
        for (std::size_t v = 0; v < 2; ++v) logits.at(i, v) = v == 0 ? bad : 0.0;
    }
  };
  TokenSeq xt = TokenSeq::all_masked(2, 2);
  BadModel nan_model(std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS((void)factorized_predict(nan_model, xt, 0.5, sched), ModelError);
  BadModel inf_model(std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS((void)factorized_predict(inf_model, xt, 0.5, sched), ModelError);
  // -inf is a legal "ruled out" score, not an error
  BadModel neginf_model(-std::numeric_limits<double>::infinity());
  DenoiserOutput mu = factorized_predict(neginf_model, xt, 0.5, sched);
  CHECK(mu.probs.at(0, 0) == 0.0);
  CHECK(mu.probs.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
}
