#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "ebdiff/ar_model.hpp"
#include "ebdiff/diffusion.hpp"
#include "ebdiff/types.hpp"

// Residual energies E(x0, x_t, t) tilting the factorized predictor:
// p(x0 | x_t) proportional to mu(x0 | x_t) * exp(-E). Lower energy = more
// probable. Energies may return +inf for x0 outside the reference model's
// support (importance weights then vanish); NaN is a model error at use sites.
namespace ebdiff {

// Everything an energy may consume at one (x_t, t) step. mu is the factorized
// predictor output for exactly this x_t and t.
struct EnergyContext {
  const TokenSeq& xt;
  double t;
  double mask_level;
  const DenoiserOutput& mu;
};

class EnergyModel {
 public:
  virtual ~EnergyModel() = default;
  virtual std::string_view kind() const = 0;
  virtual double energy(const TokenSeq& x0, const EnergyContext& ctx) const = 0;
  // True when sum over x0 of mu(x0|x_t) exp(-E) == 1 analytically, i.e. the
  // partition function never needs estimating.
  virtual bool is_self_normalized() const { return false; }
};

// E == 0: the plain factorized model, trivially self-normalized.
class ZeroEnergy final : public EnergyModel {
 public:
  std::string_view kind() const override { return "none"; }
  double energy(const TokenSeq&, const EnergyContext&) const override { return 0.0; }
  bool is_self_normalized() const override { return true; }
};

// -log p_AR(x0) + log mu(x0 | x_t). The AR reference's probability of the
// carried (unmasked) tokens is a constant per x_t and is absorbed into the
// partition function.
double energy_ar(const ARModel& ar, const TokenSeq& x0, const TokenSeq& xt,
                 const DenoiserOutput& mu);

// Carry-over variant: AR conditionals at carried positions are defined as 1,
// which normalizes the reference over completions exactly (no partition
// estimate needed). Identity: energy_coar = energy_ar + ar_carried_logprob.
double energy_coar(const ARModel& ar, const TokenSeq& x0, const TokenSeq& xt,
                   const DenoiserOutput& mu);

// Sum of the AR chain terms at positions unmasked in x_t; the additive gap
// between the two energies above.
double ar_carried_logprob(const ARModel& ar, const TokenSeq& x0, const TokenSeq& xt);

class ArEnergy final : public EnergyModel {
 public:
  ArEnergy(const ARModel& ar, bool carry_over) : ar_(&ar), carry_over_(carry_over) {}
  std::string_view kind() const override { return carry_over_ ? "coar" : "ar"; }
  double energy(const TokenSeq& x0, const EnergyContext& ctx) const override {
    return carry_over_ ? energy_coar(*ar_, x0, ctx.xt, ctx.mu)
                       : energy_ar(*ar_, x0, ctx.xt, ctx.mu);
  }
  bool is_self_normalized() const override { return carry_over_; }
  const ARModel& ar() const { return *ar_; }

 private:
  const ARModel* ar_;  // not owned
  bool carry_over_;
};

// Learned energy, linear in phi over pooled bidirectional features of
// (x0, x_t, t): mean token identity, mean token identity restricted to masked
// positions, mean adjacent-pair identity, mask fraction, and the mask level as
// the time feature. Linear in phi, so d E / d phi is the feature vector itself.
class NceEnergy final : public EnergyModel {
 public:
  NceEnergy() = default;
  explicit NceEnergy(Token vocab);

  std::string_view kind() const override { return "nce"; }
  Token vocab() const { return vocab_; }
  double energy(const TokenSeq& x0, const EnergyContext& ctx) const override {
    return energy_at(x0, ctx.xt, ctx.mask_level);
  }
  // Same value without needing a DenoiserOutput (the features ignore mu).
  double energy_at(const TokenSeq& x0, const TokenSeq& xt, double mask_level) const;

  std::size_t feature_count() const { return params_.size(); }
  void features(const TokenSeq& x0, const TokenSeq& xt, double mask_level,
                std::span<double> out) const;

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

 private:
  Token vocab_ = 0;
  std::vector<double> params_;  // phi, zero-initialized
};

// log mu(x0|x_t) - E(x0, x_t, t): the unnormalized joint log-score whose
// softmax over completions is the tilted posterior.
double joint_logprob_unnormalized(const EnergyModel& energy, const TokenSeq& x0,
                                  const EnergyContext& ctx);

}  // namespace ebdiff
