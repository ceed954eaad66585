#include "ebdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "ebdiff/errors.hpp"
#include "ebdiff/kernels.hpp"

namespace ebdiff {

FactorizedDenoiser::FactorizedDenoiser(Token vocab, int context_radius)
    : vocab_(vocab), radius_(context_radius) {
  if (vocab < 1) throw ConfigError("denoiser vocab must be >= 1");
  if (context_radius < 0) throw ConfigError("denoiser context radius must be >= 0");
  std::size_t V = static_cast<std::size_t>(vocab);
  std::size_t feats = V + 2;  // data tokens, mask, out-of-bounds
  std::size_t offsets = 2 * static_cast<std::size_t>(context_radius) + 1;
  params_.assign(offsets * feats * V + V + V, 0.0);
}

std::size_t FactorizedDenoiser::window_index(int offset_idx, Token feature, Token out) const {
  std::size_t V = static_cast<std::size_t>(vocab_);
  std::size_t feats = V + 2;
  return (static_cast<std::size_t>(offset_idx) * feats + static_cast<std::size_t>(feature)) * V +
         static_cast<std::size_t>(out);
}

std::size_t FactorizedDenoiser::time_index(Token out) const {
  std::size_t V = static_cast<std::size_t>(vocab_);
  std::size_t feats = V + 2;
  std::size_t offsets = 2 * static_cast<std::size_t>(radius_) + 1;
  return offsets * feats * V + static_cast<std::size_t>(out);
}

std::size_t FactorizedDenoiser::bias_index(Token out) const {
  return time_index(0) + static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(out);
}

Token FactorizedDenoiser::feature_id(const TokenSeq& xt, std::ptrdiff_t pos) const {
  if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(xt.size())) return vocab_ + 1;
  return xt.tokens[static_cast<std::size_t>(pos)];
}

void FactorizedDenoiser::score(const TokenSeq& xt, double mask_level, Matrix& logits) const {
  if (xt.vocab != vocab_) throw PreconditionError("denoiser score: vocab mismatch");
  std::size_t V = static_cast<std::size_t>(vocab_);
  const auto& k = kernels::active();
  std::span<const double> time_row(params_.data() + time_index(0), V);
  std::span<const double> bias_row(params_.data() + bias_index(0), V);
  for (std::size_t i = 0; i < xt.size(); ++i) {
    if (!xt.is_masked(i)) continue;
    auto row = logits.row(i);
    std::memcpy(row.data(), bias_row.data(), V * sizeof(double));
    for (int d = -radius_; d <= radius_; ++d) {
      Token f = feature_id(xt, static_cast<std::ptrdiff_t>(i) + d);
      std::span<const double> w(params_.data() + window_index(d + radius_, f, 0), V);
      k.add(row, w);
    }
    k.axpy(row, mask_level, time_row);
  }
}

void FactorizedDenoiser::init_random(RngStream& rng, double half_width) {
  for (double& p : params_) p = (2.0 * rng.next_double() - 1.0) * half_width;
}

double elbo_weight(const NoiseSchedule& sched, double t) {
  return -sched.alpha_prime(t) / (1.0 - sched.alpha(t));
}

namespace {

// Shared core: loss always computed; grad accumulated when non-empty.
double loss_grad_impl(const FactorizedDenoiser& model, const TokenSeq& x0, const TokenSeq& xt,
                      double t, const NoiseSchedule& sched, std::span<double> grad,
                      double weight_cap) {
  if (x0.size() != xt.size() || x0.vocab != xt.vocab)
    throw PreconditionError("denoiser loss: x0/x_t mismatch");
  double w = elbo_weight(sched, t);
  if (weight_cap > 0.0 && w > weight_cap) w = weight_cap;
  std::size_t V = static_cast<std::size_t>(model.vocab());
  double mask_level = sched.mask_level(t);
  Matrix logits(xt.size(), V);
  model.score(xt, mask_level, logits);
  std::vector<double> p(V);
  const auto& k = kernels::active();
  double loss = 0.0;
  for (std::size_t i = 0; i < xt.size(); ++i) {
    if (!xt.is_masked(i)) continue;
    auto row = logits.row(i);
    double lse = kernels::softmax(row, p);
    std::size_t y = static_cast<std::size_t>(x0[i]);
    loss += w * (lse - row[y]);
    if (!grad.empty()) {
      p[y] -= 1.0;
      k.scale(p, w);
      std::span<double> g(p);
      k.add({grad.data() + model.bias_index(0), V}, g);
      k.axpy({grad.data() + model.time_index(0), V}, mask_level, g);
      for (int d = -model.context_radius(); d <= model.context_radius(); ++d) {
        Token f = model.feature_id(xt, static_cast<std::ptrdiff_t>(i) + d);
        k.add({grad.data() + model.window_index(d + model.context_radius(), f, 0), V}, g);
      }
    }
  }
  return loss;
}

}  // namespace

double denoiser_loss(const FactorizedDenoiser& model, const TokenSeq& x0, const TokenSeq& xt,
                     double t, const NoiseSchedule& sched) {
  return loss_grad_impl(model, x0, xt, t, sched, {}, 0.0);
}

double denoiser_loss_grad(const FactorizedDenoiser& model, const TokenSeq& x0,
                          const TokenSeq& xt, double t, const NoiseSchedule& sched,
                          std::span<double> grad, double weight_cap) {
  if (grad.size() != model.param_count())
    throw PreconditionError("denoiser grad: wrong gradient size");
  return loss_grad_impl(model, x0, xt, t, sched, grad, weight_cap);
}

TokenSeq corpus_window(std::span<const Token> corpus, Token vocab, std::size_t seq_len,
                       RngStream& rng) {
  if (corpus.size() < seq_len) throw DataError("corpus shorter than the training window");
  std::size_t span = corpus.size() - seq_len + 1;
  std::size_t start = static_cast<std::size_t>(rng.next_double() * static_cast<double>(span));
  if (start >= span) start = span - 1;
  return TokenSeq(std::vector<Token>(corpus.begin() + static_cast<std::ptrdiff_t>(start),
                                     corpus.begin() + static_cast<std::ptrdiff_t>(start + seq_len)),
                  vocab);
}

std::vector<TrainTraceRow> denoiser_train(FactorizedDenoiser& model,
                                          std::span<const Token> train,
                                          std::span<const Token> heldout,
                                          const NoiseSchedule& sched,
                                          const DenoiserTrainConfig& cfg, const RngStream& rng) {
  if (cfg.steps < 0 || cfg.lr <= 0.0 || cfg.seq_len < 1) throw ConfigError("bad train config");
  Token vocab = model.vocab();

  // Fixed evaluation tuples for the trace, drawn once up front.
  std::span<const Token> eval_src = heldout.empty() ? train : heldout;
  struct EvalTuple {
    TokenSeq x0, xt;
    double t;
  };
  std::vector<EvalTuple> eval_set;
  if (cfg.trace_every > 0) {
    RngStream h = rng.child("heldout");
    for (std::size_t j = 0; j < cfg.heldout_pairs; ++j) {
      RngStream hj = h.child_indexed("pair", j);
      TokenSeq x0 = corpus_window(eval_src, vocab, cfg.seq_len, hj);
      double t = hj.next_double();
      TokenSeq xt = forward_sample(x0, t, sched, hj);
      eval_set.push_back({std::move(x0), std::move(xt), t});
    }
  }
  auto heldout_loss = [&]() {
    double s = 0.0;
    for (const auto& e : eval_set) s += denoiser_loss(model, e.x0, e.xt, e.t, sched);
    return eval_set.empty() ? 0.0 : s / static_cast<double>(eval_set.size());
  };

  std::vector<TrainTraceRow> trace;
  if (cfg.trace_every > 0) trace.push_back({0, 0.0, heldout_loss()});

  std::vector<double> grad(model.param_count());
  double bucket = 0.0;
  int bucket_n = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    RngStream s = rng.child_indexed("step", static_cast<std::uint64_t>(step));
    TokenSeq x0 = corpus_window(train, vocab, cfg.seq_len, s);
    double t = s.next_double();
    TokenSeq xt = forward_sample(x0, t, sched, s);
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = denoiser_loss_grad(model, x0, xt, t, sched, grad, cfg.weight_cap);
    if (!std::isfinite(loss)) throw TrainingError("denoiser training loss non-finite");
    kernels::active().axpy(model.params(), -cfg.lr, grad);
    bucket += loss;
    ++bucket_n;
    if (cfg.trace_every > 0 && (step + 1) % cfg.trace_every == 0) {
      trace.push_back({step + 1, bucket / bucket_n, heldout_loss()});
      bucket = 0.0;
      bucket_n = 0;
    }
  }
  for (double p : model.params())
    if (!std::isfinite(p)) throw TrainingError("denoiser parameters non-finite after training");
  return trace;
}

}  // namespace ebdiff
