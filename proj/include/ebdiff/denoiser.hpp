#pragma once

#include <span>
#include <vector>

#include "ebdiff/diffusion.hpp"
#include "ebdiff/rng.hpp"
#include "ebdiff/schedule.hpp"
#include "ebdiff/types.hpp"

namespace ebdiff {

// Linear per-position scorer over a symmetric context window of token-identity
// features. For position i the logit of output token v is
//
//   bias[v] + sum_{d=-r..r} W[d, feat(i+d), v] + mask_level * time[v]
//
// where feat() is the observed token id (mask included as its own id) or a
// distinct out-of-bounds id past the sequence ends. Deliberately small: enough
// capacity for desk-scale corpora while keeping gradients exact and cheap.
class FactorizedDenoiser : public X0Model {
 public:
  FactorizedDenoiser() = default;
  FactorizedDenoiser(Token vocab, int context_radius);

  Token vocab() const override { return vocab_; }
  int context_radius() const { return radius_; }

  void score(const TokenSeq& xt, double mask_level, Matrix& logits) const override;

  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // Small uniform init, for tests that need a non-degenerate untrained model.
  void init_random(RngStream& rng, double half_width);

  // Parameter block offsets (window tables, then time row, then bias row).
  std::size_t window_index(int offset_idx, Token feature, Token out) const;
  std::size_t time_index(Token out) const;
  std::size_t bias_index(Token out) const;
  Token feature_id(const TokenSeq& xt, std::ptrdiff_t pos) const;

 private:
  Token vocab_ = 0;
  int radius_ = 0;
  std::vector<double> params_;
};

// Positive weight -alpha'(t) / (1 - alpha(t)) multiplying the masked
// cross-entropy in the continuous-time bound.
double elbo_weight(const NoiseSchedule& sched, double t);

// Per-sample training objective: elbo_weight(t) * sum over masked positions of
// -log mu_i(x0_i). Zero when nothing is masked.
double denoiser_loss(const FactorizedDenoiser& model, const TokenSeq& x0, const TokenSeq& xt,
                     double t, const NoiseSchedule& sched);

// Same objective with the weight capped at weight_cap (cap <= 0 disables
// capping); accumulates the gradient w.r.t. params into grad. Returns the
// (capped) loss. The cap is a training-only stability device: the uncapped
// weight approaches 1/eps as t -> 0 and single rare draws there would dwarf
// every other SGD step. Capping keeps every noise level positively weighted,
// so the minimizer is unchanged.
double denoiser_loss_grad(const FactorizedDenoiser& model, const TokenSeq& x0,
                          const TokenSeq& xt, double t, const NoiseSchedule& sched,
                          std::span<double> grad, double weight_cap);

struct DenoiserTrainConfig {
  int steps = 20000;
  double lr = 0.1;
  std::size_t seq_len = 64;
  double weight_cap = 20.0;
  int trace_every = 200;        // 0 disables tracing
  std::size_t heldout_pairs = 64;  // fixed (x0, x_t, t) tuples for the trace
};

struct TrainTraceRow {
  int step = 0;
  double train_loss = 0.0;  // mean capped loss since the previous row
  double heldout_loss = 0.0;
};

// Uniformly positioned length-seq_len slice of the corpus (one uniform draw).
// Both trainers use this for their window sampling.
TokenSeq corpus_window(std::span<const Token> corpus, Token vocab, std::size_t seq_len,
                       RngStream& rng);

// Plain SGD over random corpus windows; t ~ U[0,1] per step. `heldout` may be
// empty, in which case trace rows reuse the training stream for the fixed
// evaluation tuples. All randomness comes from named substreams of `rng`.
std::vector<TrainTraceRow> denoiser_train(FactorizedDenoiser& model,
                                          std::span<const Token> train,
                                          std::span<const Token> heldout,
                                          const NoiseSchedule& sched,
                                          const DenoiserTrainConfig& cfg, const RngStream& rng);

}  // namespace ebdiff
