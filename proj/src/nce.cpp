#include "ebdiff/nce.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "ebdiff/errors.hpp"
#include "ebdiff/kernels.hpp"

namespace ebdiff {
namespace {

// One (positive, negative, x_t, mask level) tuple ready to score.
struct PairTuple {
  TokenSeq pos, neg, xt;
  double mask_level = 0.0;
};

// Shared recipe for drawing a tuple: corpus window, t ~ U[0,1], forward mask,
// one predictor completion as the negative.
PairTuple draw_pair(const X0Model& denoiser, std::span<const Token> corpus, Token vocab,
                    std::size_t seq_len, const NoiseSchedule& sched, RngStream& rng) {
  PairTuple p;
  p.pos = corpus_window(corpus, vocab, seq_len, rng);
  const double t = rng.next_double();
  p.xt = forward_sample(p.pos, t, sched, rng);
  const DenoiserOutput mu = factorized_predict(denoiser, p.xt, t, sched);
  p.neg = draw_x0(p.xt, mu, rng);
  p.mask_level = sched.mask_level(t);
  return p;
}

}  // namespace

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double nce_pair_loss(const NceEnergy& energy, const TokenSeq& pos, const TokenSeq& neg,
                     const TokenSeq& xt, double mask_level) {
  return softplus(energy.energy_at(pos, xt, mask_level)) +
         softplus(-energy.energy_at(neg, xt, mask_level));
}

double nce_pair_loss_grad(const NceEnergy& energy, const TokenSeq& pos, const TokenSeq& neg,
                          const TokenSeq& xt, double mask_level, std::span<double> grad) {
  if (grad.size() != energy.feature_count())
    throw PreconditionError("nce grad: wrong gradient size");
  const double ep = energy.energy_at(pos, xt, mask_level);
  const double en = energy.energy_at(neg, xt, mask_level);
  std::vector<double> f(energy.feature_count());
  energy.features(pos, xt, mask_level, f);
  kernels::active().axpy(grad, sigmoid(ep), f);
  energy.features(neg, xt, mask_level, f);
  kernels::active().axpy(grad, -sigmoid(-en), f);
  return softplus(ep) + softplus(-en);
}

std::vector<TrainTraceRow> nce_train(NceEnergy& energy, const X0Model& denoiser,
                                     std::span<const Token> train,
                                     std::span<const Token> heldout,
                                     const NoiseSchedule& sched, const NceTrainConfig& cfg,
                                     const RngStream& rng) {
  if (cfg.steps < 0 || cfg.lr <= 0.0 || cfg.seq_len < 1) throw ConfigError("bad train config");
  if (energy.vocab() != denoiser.vocab())
    throw PreconditionError("energy and predictor vocabularies differ");
  const Token vocab = energy.vocab();

  std::span<const Token> eval_src = heldout.empty() ? train : heldout;
  std::vector<PairTuple> eval_set;
  if (cfg.trace_every > 0) {
    RngStream h = rng.child("heldout");
    for (std::size_t j = 0; j < cfg.heldout_pairs; ++j) {
      RngStream hj = h.child_indexed("pair", j);
      eval_set.push_back(draw_pair(denoiser, eval_src, vocab, cfg.seq_len, sched, hj));
    }
  }
  auto heldout_loss = [&]() {
    double s = 0.0;
    for (const PairTuple& p : eval_set)
      s += nce_pair_loss(energy, p.pos, p.neg, p.xt, p.mask_level);
    return eval_set.empty() ? 0.0 : s / static_cast<double>(eval_set.size());
  };

  std::vector<TrainTraceRow> trace;
  if (cfg.trace_every > 0) trace.push_back({0, 0.0, heldout_loss()});

  std::vector<double> grad(energy.feature_count());
  double bucket = 0.0;
  int bucket_n = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    RngStream s = rng.child_indexed("step", static_cast<std::uint64_t>(step));
    const PairTuple p = draw_pair(denoiser, train, vocab, cfg.seq_len, sched, s);
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = nce_pair_loss_grad(energy, p.pos, p.neg, p.xt, p.mask_level, grad);
    if (!std::isfinite(loss)) throw TrainingError("nce training loss non-finite");
    kernels::active().axpy(energy.params(), -cfg.lr, grad);
    bucket += loss;
    ++bucket_n;
    if (cfg.trace_every > 0 && (step + 1) % cfg.trace_every == 0) {
      trace.push_back({step + 1, bucket / bucket_n, heldout_loss()});
      bucket = 0.0;
      bucket_n = 0;
    }
  }
  for (double v : energy.params())
    if (!std::isfinite(v)) throw TrainingError("energy parameters non-finite after training");
  return trace;
}

NceHeldout nce_heldout(const NceEnergy& energy, const X0Model& denoiser,
                       std::span<const Token> corpus, const NoiseSchedule& sched,
                       std::size_t pairs, std::size_t seq_len, const RngStream& rng) {
  if (pairs == 0) throw PreconditionError("nce heldout needs at least one pair");
  if (energy.vocab() != denoiser.vocab())
    throw PreconditionError("energy and predictor vocabularies differ");
  std::vector<double> losses(pairs);
  for (std::size_t j = 0; j < pairs; ++j) {
    RngStream pj = rng.child_indexed("pair", j);
    const PairTuple p = draw_pair(denoiser, corpus, energy.vocab(), seq_len, sched, pj);
    losses[j] = nce_pair_loss(energy, p.pos, p.neg, p.xt, p.mask_level);
  }
  NceHeldout out;
  out.pairs = pairs;
  for (double v : losses) out.mean += v;
  out.mean /= static_cast<double>(pairs);
  if (pairs > 1) {
    double ss = 0.0;
    for (double v : losses) {
      const double d = v - out.mean;
      ss += d * d;
    }
    out.se = std::sqrt(ss / static_cast<double>(pairs - 1) / static_cast<double>(pairs));
  }
  return out;
}

NceSeparation nce_separation(const NceEnergy& energy, const X0Model& denoiser,
                             std::span<const Token> corpus, const NoiseSchedule& sched,
                             std::size_t pairs, std::size_t seq_len, const RngStream& rng) {
  if (pairs == 0) throw PreconditionError("nce separation needs at least one pair");
  if (energy.vocab() != denoiser.vocab())
    throw PreconditionError("energy and predictor vocabularies differ");
  NceSeparation out;
  out.pairs = pairs;
  std::vector<double> gaps(pairs);
  for (std::size_t j = 0; j < pairs; ++j) {
    RngStream pj = rng.child_indexed("pair", j);
    const PairTuple p = draw_pair(denoiser, corpus, energy.vocab(), seq_len, sched, pj);
    const double ep = energy.energy_at(p.pos, p.xt, p.mask_level);
    const double en = energy.energy_at(p.neg, p.xt, p.mask_level);
    out.pos_mean += ep;
    out.neg_mean += en;
    gaps[j] = en - ep;
  }
  out.pos_mean /= static_cast<double>(pairs);
  out.neg_mean /= static_cast<double>(pairs);
  out.gap_mean = out.neg_mean - out.pos_mean;
  if (pairs > 1) {
    double ss = 0.0;
    for (double g : gaps) {
      const double d = g - out.gap_mean;
      ss += d * d;
    }
    out.gap_se = std::sqrt(ss / static_cast<double>(pairs - 1) / static_cast<double>(pairs));
  }
  return out;
}

}  // namespace ebdiff
