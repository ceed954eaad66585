#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdlib>
#include <vector>

#include "doctest.h"
#include "ebdiff/denoiser.hpp"
#include "ebdiff/diffusion.hpp"
#include "ebdiff/errors.hpp"
#include "ebdiff/rng.hpp"
#include "ebdiff/schedule.hpp"
#include "support/fixtures.hpp"

using namespace ebdiff;

TEST_CASE("parameter block layout") {
  FactorizedDenoiser m(4, 2);
  // 5 offsets x (4 tokens + mask + oob) features x 4 outputs, then time row, then bias row
  CHECK(m.param_count() == 5 * 6 * 4 + 4 + 4);
  CHECK(m.window_index(0, 0, 0) == 0);
  CHECK(m.time_index(0) == 5 * 6 * 4);
  CHECK(m.bias_index(0) == 5 * 6 * 4 + 4);
  // all indices distinct and in range is implied by the formula; spot-check edges
  CHECK(m.window_index(4, 5, 3) == 5 * 6 * 4 - 1);
  CHECK(m.bias_index(3) == m.param_count() - 1);
}

TEST_CASE("score is the documented linear form") {
  FactorizedDenoiser m(3, 1);
  RngStream rng = RngStream(3).child("init");
  m.init_random(rng, 0.8);
  TokenSeq xt({3, 1, 3, 0}, 3);  // masks at 0 and 2
  double mask_level = 0.42;
  Matrix logits(4, 3);
  m.score(xt, mask_level, logits);
  auto p = m.params();
  for (std::size_t i : {std::size_t(0), std::size_t(2)}) {
    for (Token v = 0; v < 3; ++v) {
      double want = p[m.bias_index(v)] + mask_level * p[m.time_index(v)];
      for (int d = -1; d <= 1; ++d) {
        Token f = m.feature_id(xt, static_cast<std::ptrdiff_t>(i) + d);
        want += p[m.window_index(d + 1, f, v)];
      }
      CHECK(logits.at(i, static_cast<std::size_t>(v)) ==
            doctest::Approx(want).epsilon(1e-13));
    }
  }
  // out-of-bounds neighbors use the dedicated feature id
  CHECK(m.feature_id(xt, -1) == 4);
  CHECK(m.feature_id(xt, 4) == 4);
  CHECK(m.feature_id(xt, 0) == 3);  // the mask id
}

TEST_CASE("elbo_weight closed form on the linear schedule") {
  NoiseSchedule sched;
  // alpha = 1 - t, -alpha' = 1, so the weight is 1/t in the unclamped region
  CHECK(elbo_weight(sched, 0.5) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(elbo_weight(sched, 0.25) == doctest::Approx(4.0).epsilon(1e-12));
  // near t = 0 the clamp bounds it at 1/eps
  CHECK(elbo_weight(sched, 0.0) == doctest::Approx(1.0 / sched.eps).epsilon(1e-9));
}

TEST_CASE("loss is zero without masks and weighted cross-entropy with them") {
  NoiseSchedule sched;
  FactorizedDenoiser m = ebtest::random_denoiser(3, 1, 5);
  RngStream rng(6);
  TokenSeq x0 = ebtest::random_x0(3, 6, rng);
  CHECK(denoiser_loss(m, x0, x0, 0.5, sched) == 0.0);

  TokenSeq xt = forward_sample(x0, 0.7, sched, rng);
  DenoiserOutput mu = factorized_predict(m, xt, 0.7, sched);
  double want = -elbo_weight(sched, 0.7) * factorized_logprob(xt, mu, x0);
  CHECK(denoiser_loss(m, x0, xt, 0.7, sched) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("weight cap changes only the scale") {
  NoiseSchedule sched;
  FactorizedDenoiser m = ebtest::random_denoiser(3, 1, 7);
  RngStream rng(8);
  TokenSeq x0 = ebtest::random_x0(3, 6, rng);
  double t = 0.02;  // weight 1/t = 50
  TokenSeq xt = forward_sample(x0, 0.9, sched, rng);  // ensure masks
  std::vector<double> g1(m.param_count(), 0.0), g2(m.param_count(), 0.0);
  double uncapped = denoiser_loss_grad(m, x0, xt, t, sched, g1, 0.0);
  double capped = denoiser_loss_grad(m, x0, xt, t, sched, g2, 10.0);
  double ratio = 10.0 / elbo_weight(sched, t);
  CHECK(capped == doctest::Approx(uncapped * ratio).epsilon(1e-10));
  for (std::size_t j = 0; j < g1.size(); ++j)
    CHECK(g2[j] == doctest::Approx(g1[j] * ratio).epsilon(1e-9));
}

TEST_CASE("analytic gradient matches central differences") {
  NoiseSchedule sched;
  FactorizedDenoiser m = ebtest::random_denoiser(4, 1, 9, 0.6);
  RngStream rng(10);
  TokenSeq x0 = ebtest::random_x0(4, 8, rng);
  TokenSeq xt = forward_sample(x0, 0.6, sched, rng);
  REQUIRE(xt.masked_count() > 0);

  std::vector<double> grad(m.param_count(), 0.0);
  denoiser_loss_grad(m, x0, xt, 0.6, sched, grad, 0.0);

  const double h = 1e-6;
  int checked = 0;
  for (int rep = 0; rep < 200 && checked < 20; ++rep) {
    std::size_t j = rng.next_u64() % m.param_count();
    if (std::abs(grad[j]) < 1e-8) continue;  // inactive feature this tuple
    double saved = m.params()[j];
    m.params()[j] = saved + h;
    double up = denoiser_loss(m, x0, xt, 0.6, sched);
    m.params()[j] = saved - h;
    double dn = denoiser_loss(m, x0, xt, 0.6, sched);
    m.params()[j] = saved;
    double fd = (up - dn) / (2.0 * h);
    CHECK(std::abs(fd - grad[j]) / std::max(std::abs(fd), std::abs(grad[j])) <= 1e-4);
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("corpus_window bounds and determinism") {
  std::vector<Token> corpus(100);
  for (std::size_t i = 0; i < corpus.size(); ++i) corpus[i] = static_cast<Token>(i % 4);
  RngStream a = RngStream(4).child("w"), b = RngStream(4).child("w");
  for (int i = 0; i < 50; ++i) {
    TokenSeq w1 = corpus_window(corpus, 4, 16, a);
    TokenSeq w2 = corpus_window(corpus, 4, 16, b);
    CHECK(w1 == w2);
    CHECK(w1.size() == 16);
    // windows are contiguous corpus slices: the mod-4 ramp identifies the offset
    for (std::size_t j = 1; j < 16; ++j)
      CHECK(w1[j] == static_cast<Token>((w1[j - 1] + 1) % 4));
  }
  RngStream c(1);
  std::vector<Token> tiny(5, 0);
  CHECK_THROWS_AS((void)corpus_window(tiny, 4, 16, c), DataError);
}

TEST_CASE("training reduces the held-out loss") {
  std::vector<Token> corpus = ebtest::grammar_corpus(20000, 303);
  std::span<const Token> all(corpus);
  std::span<const Token> train = all.first(16000);
  std::span<const Token> heldout = all.subspan(16000);
  NoiseSchedule sched;

  FactorizedDenoiser m(ebtest::kGrammarVocab, 1);
  DenoiserTrainConfig cfg;
  cfg.steps = 1200;
  cfg.lr = 0.15;
  cfg.seq_len = 32;
  cfg.trace_every = 200;
  cfg.heldout_pairs = 32;
  RngStream rng(71);
  std::vector<TrainTraceRow> trace = denoiser_train(m, train, heldout, sched, cfg, rng);
  REQUIRE(trace.size() >= 2);
  CHECK(trace.back().heldout_loss < trace.front().heldout_loss);
  CHECK(trace.back().step == cfg.steps);
  for (double p : m.params()) CHECK(std::isfinite(p));

  // identical seeds give identical parameters
  FactorizedDenoiser m2(ebtest::kGrammarVocab, 1);
  RngStream rng2(71);
  denoiser_train(m2, train, heldout, sched, cfg, rng2);
  for (std::size_t j = 0; j < m.param_count(); ++j) CHECK(m.params()[j] == m2.params()[j]);
}
