#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ebdiff/denoiser.hpp"
#include "ebdiff/diffusion.hpp"
#include "ebdiff/energy.hpp"
#include "ebdiff/rng.hpp"
#include "ebdiff/schedule.hpp"
#include "ebdiff/types.hpp"

// Noise-contrastive training of the learned energy. Positives are corpus
// sequences, negatives are completions drawn from the frozen factorized
// predictor at the same (x_t, t); the pair loss
//
//   softplus(E(pos)) + softplus(-E(neg))
//
// pushes data energy down and model-sample energy up. At phi = 0 both energies
// vanish and the loss is exactly 2 log 2, the chance-level baseline every
// training curve starts from.
namespace ebdiff {

// log(1 + exp(x)), overflow-safe for any finite x.
double softplus(double x);
double sigmoid(double x);

double nce_pair_loss(const NceEnergy& energy, const TokenSeq& pos, const TokenSeq& neg,
                     const TokenSeq& xt, double mask_level);

// Accumulates d loss / d phi into grad (size feature_count()) and returns the
// loss. The energy is linear in phi, so the gradient is
// sigmoid(E(pos)) f(pos) - sigmoid(-E(neg)) f(neg).
double nce_pair_loss_grad(const NceEnergy& energy, const TokenSeq& pos, const TokenSeq& neg,
                          const TokenSeq& xt, double mask_level, std::span<double> grad);

struct NceTrainConfig {
  int steps = 30000;
  double lr = 0.05;
  std::size_t seq_len = 64;
  int trace_every = 200;           // 0 disables tracing
  std::size_t heldout_pairs = 128;  // fixed (pos, neg, x_t, t) tuples for the trace
};

// SGD on the pair loss with negatives from `denoiser` (frozen; only phi moves).
// Per step: draw a corpus window x0, t ~ U[0,1], x_t ~ q(.|x0), one negative
// from the predictor at (x_t, t). Heldout trace tuples (windows of `heldout`,
// falling back to `train` when empty) are fixed up front, negatives included,
// so trace rows are comparable across steps. Reuses TrainTraceRow: train_loss
// is the mean pair loss since the previous row, heldout_loss the fixed-set mean.
std::vector<TrainTraceRow> nce_train(NceEnergy& energy, const X0Model& denoiser,
                                     std::span<const Token> train,
                                     std::span<const Token> heldout,
                                     const NoiseSchedule& sched, const NceTrainConfig& cfg,
                                     const RngStream& rng);

struct NceHeldout {
  double mean = 0.0;
  double se = 0.0;
  std::size_t pairs = 0;
};

// Mean pair loss on freshly drawn evaluation tuples; < 2 log 2 means the energy
// separates data from predictor samples better than chance.
NceHeldout nce_heldout(const NceEnergy& energy, const X0Model& denoiser,
                       std::span<const Token> corpus, const NoiseSchedule& sched,
                       std::size_t pairs, std::size_t seq_len, const RngStream& rng);

// Paired comparison of E(data) against E(predictor sample) on fresh tuples.
// gap = mean of E(neg) - E(pos) per pair; a trained energy should have
// gap_mean >> gap_se > 0.
struct NceSeparation {
  double pos_mean = 0.0;
  double neg_mean = 0.0;
  double gap_mean = 0.0;
  double gap_se = 0.0;
  std::size_t pairs = 0;
};

NceSeparation nce_separation(const NceEnergy& energy, const X0Model& denoiser,
                             std::span<const Token> corpus, const NoiseSchedule& sched,
                             std::size_t pairs, std::size_t seq_len, const RngStream& rng);

}  // namespace ebdiff
