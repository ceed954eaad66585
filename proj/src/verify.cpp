#include "ebdiff/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "ebdiff/ar_model.hpp"
#include "ebdiff/denoiser.hpp"
#include "ebdiff/diffusion.hpp"
#include "ebdiff/energy.hpp"
#include "ebdiff/eval.hpp"
#include "ebdiff/kernels.hpp"
#include "ebdiff/nce.hpp"
#include "ebdiff/oracle.hpp"
#include "ebdiff/rng.hpp"
#include "ebdiff/sampler.hpp"
#include "ebdiff/schedule.hpp"
#include "ebdiff/types.hpp"

namespace ebdiff {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Random mask-free sequence.
TokenSeq random_x0(Token vocab, std::size_t len, RngStream& rng) {
  std::vector<Token> t(len);
  for (Token& v : t)
    v = static_cast<Token>(rng.next_double() * static_cast<double>(vocab));
  return TokenSeq(std::move(t), vocab);
}

// Random state with each position masked with probability p_mask.
TokenSeq random_xt(Token vocab, std::size_t len, double p_mask, RngStream& rng) {
  TokenSeq s = random_x0(vocab, len, rng);
  for (std::size_t i = 0; i < len; ++i)
    if (rng.next_double() < p_mask) s[i] = s.mask_id();
  return s;
}

FactorizedDenoiser random_denoiser(Token vocab, int radius, RngStream& rng, double width = 0.5) {
  FactorizedDenoiser d(vocab, radius);
  RngStream r = rng.child("init");
  d.init_random(r, width);
  return d;
}

ARModel small_ar(Token vocab, int order, RngStream& rng, std::size_t corpus_len = 400) {
  std::vector<Token> corpus(corpus_len);
  for (Token& t : corpus)
    t = static_cast<Token>(rng.next_double() * static_cast<double>(vocab));
  return ar_fit(corpus, vocab, order, 0.5);
}

VerifyCheck check_rng_determinism(std::uint64_t) {
  // Frozen outputs; any platform or compiler that disagrees would silently
  // break every seeded experiment, so this fails loudly instead.
  RngStream r(42);
  if (r.next_u64() != 7070981336044904875ull || r.next_u64() != 2628084803809867297ull ||
      r.next_u64() != 17035241616001102245ull)
    return {"rng-determinism", false, "seed-42 draw sequence diverged from golden values"};
  RngStream r2(42);
  RngStream c = r2.child("train");
  if (c.next_u64() != 10913541308449346777ull)
    return {"rng-determinism", false, "child(\"train\") diverged from golden value"};
  RngStream c2 = r2.child_indexed("step", 7);
  if (c2.next_u64() != 11171792971580803486ull)
    return {"rng-determinism", false, "child_indexed(\"step\", 7) diverged from golden value"};
  RngStream a(7);
  RngStream before = a.child("x");
  a.next_u64();
  a.next_u64();
  RngStream after = a.child("x");
  if (before.next_u64() != after.next_u64())
    return {"rng-determinism", false, "child derivation depends on parent draw position"};
  RngStream d(1);
  const double u = d.next_double();
  if (!(u >= 0.0 && u < 1.0) || u != 0.040134881875663497)
    return {"rng-determinism", false, "next_double diverged from golden value"};
  return {"rng-determinism", true, "golden draws and child derivation stable"};
}

VerifyCheck check_kernels(std::uint64_t seed) {
  if (!kernels::detail::avx2_supported())
    return {"kernels-equivalence", true, "scalar only (cpu lacks avx2)"};
  struct Guard {
    std::string_view prev = kernels::active_name();
    ~Guard() { kernels::force_backend(prev); }
  } guard;
  RngStream rng = RngStream(seed).child("kernels");
  double max_rel = 0.0;
  for (std::size_t n : {1u, 2u, 3u, 7u, 8u, 16u, 33u, 64u, 67u}) {
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = (rng.next_double() - 0.5) * 60.0;
      y[i] = (rng.next_double() - 0.5) * 60.0;
    }
    if (n > 4) x[3] = -kInf;  // excluded token representation must agree too
    kernels::force_backend("scalar");
    const double lse_s = kernels::log_sum_exp(x);
    const double dot_s = kernels::active().dot(
        std::span<const double>(y), std::span<const double>(y));
    kernels::force_backend("avx2");
    const double lse_a = kernels::log_sum_exp(x);
    const double dot_a = kernels::active().dot(
        std::span<const double>(y), std::span<const double>(y));
    const double scale = std::max({1.0, std::abs(lse_s), std::abs(dot_s)});
    max_rel = std::max(max_rel, std::abs(lse_s - lse_a) / scale);
    max_rel = std::max(max_rel, std::abs(dot_s - dot_a) / scale);
  }
  const bool pass = max_rel <= 1e-12;
  return {"kernels-equivalence", pass, "scalar vs avx2 max rel diff " + fmt(max_rel)};
}

VerifyCheck check_schedule(std::uint64_t) {
  for (ScheduleKind kind : {ScheduleKind::linear, ScheduleKind::loglinear}) {
    NoiseSchedule s;
    s.kind = kind;
    s.c = kind == ScheduleKind::loglinear ? 2.0 : 1.0;
    double prev = 2.0;
    for (int i = 0; i <= 50; ++i) {
      const double t = static_cast<double>(i) / 50.0;
      const double a = s.alpha(t);
      if (!(a >= s.eps && a <= 1.0 - s.eps) || a > prev)
        return {"schedule-sanity", false, "alpha not decreasing within [eps, 1-eps]"};
      prev = a;
      if (std::abs(s.mask_level(t) - (1.0 - a)) > 1e-15)
        return {"schedule-sanity", false, "mask_level != 1 - alpha"};
    }
    for (double t : {0.3, 0.8}) {
      for (double st : {0.1, 0.3}) {
        if (std::abs(s.alpha_ratio(st, t) * s.alpha(st) - s.alpha(t)) > 1e-14)
          return {"schedule-sanity", false, "alpha_ratio identity broken"};
      }
    }
  }
  return {"schedule-sanity", true, "monotone, clamped, ratio identity holds"};
}

VerifyCheck check_posterior_oracle(std::uint64_t seed) {
  RngStream rng = RngStream(seed).child("posterior");
  const Token V = 3;
  NoiseSchedule sched;
  std::vector<double> pi(static_cast<std::size_t>(V) + 1, 0.0);
  pi.back() = 1.0;  // absorbing kernel: all forward mass goes to the mask state
  double max_err = 0.0;
  for (int it = 0; it < 200; ++it) {
    const Token x0_tok = static_cast<Token>(rng.next_double() * V);
    const bool masked = rng.next_double() < 0.7;
    double s = rng.next_double();
    double t = rng.next_double();
    if (s > t) std::swap(s, t);
    const TokenSeq x0({x0_tok}, V);
    const TokenSeq xt({masked ? V : x0_tok}, V);
    const PosteriorStep step = posterior(x0, xt, s, t, sched);
    const std::vector<double> ref = oracle::general_posterior_row(
        pi, static_cast<std::size_t>(x0_tok), static_cast<std::size_t>(xt[0]), sched.alpha(s),
        sched.alpha(t));
    for (std::size_t k = 0; k <= static_cast<std::size_t>(V); ++k) {
      double mine = 0.0;
      if (k == static_cast<std::size_t>(V))
        mine = step.p_mask[0];
      else if (static_cast<Token>(k) == step.reveal_token[0])
        mine = step.p_reveal[0];
      max_err = std::max(max_err, std::abs(mine - ref[k]));
    }
  }
  return {"posterior-oracle", max_err <= 1e-12,
          "max abs diff vs general-kernel evaluation " + fmt(max_err)};
}

VerifyCheck check_tilted_ar(std::uint64_t seed) {
  RngStream rng = RngStream(seed).child("tilted");
  const Token V = 3;
  const std::size_t L = 4;
  RngStream ar_rng = rng.child("ar");
  const ARModel ar = small_ar(V, 2, ar_rng);
  RngStream d_rng = rng.child("denoiser");
  const FactorizedDenoiser den = random_denoiser(V, 1, d_rng);
  const ArEnergy energy(ar, false);
  NoiseSchedule sched;
  double max_err = 0.0;
  for (int it = 0; it < 20; ++it) {
    RngStream it_rng = rng.child_indexed("case", static_cast<std::uint64_t>(it));
    const TokenSeq xt = it == 0 ? TokenSeq::all_masked(L, V)
                                : random_xt(V, L, 0.6, it_rng);
    const double t = 0.25 + 0.5 * it_rng.next_double();
    const oracle::EnumeratedDistribution got =
        oracle::exact_tilted_posterior(den, energy, xt, t, sched);
    const oracle::EnumeratedDistribution want =
        oracle::enumerate_logweights(V, L, [&](const TokenSeq& x0) {
          for (std::size_t i = 0; i < L; ++i)
            if (!xt.is_masked(i) && x0[i] != xt[i]) return -kInf;
          return ar.logprob(x0);
        });
    max_err = std::max(max_err, [&] {
      double m = 0.0;
      for (std::size_t i = 0; i < got.probs.size(); ++i)
        m = std::max(m, std::abs(got.probs[i] - want.probs[i]));
      return m;
    }());
  }
  return {"tilted-ar-identity", max_err <= 1e-10,
          "max abs diff vs restricted reference distribution " + fmt(max_err)};
}

VerifyCheck check_coar_selfnorm(std::uint64_t seed) {
  RngStream rng = RngStream(seed).child("coar");
  const Token V = 3;
  const std::size_t L = 4;
  RngStream ar_rng = rng.child("ar");
  const ARModel ar = small_ar(V, 2, ar_rng);
  RngStream d_rng = rng.child("denoiser");
  const FactorizedDenoiser den = random_denoiser(V, 1, d_rng);
  const ArEnergy energy(ar, true);
  NoiseSchedule sched;
  double max_err = 0.0;
  for (int it = 0; it < 20; ++it) {
    RngStream it_rng = rng.child_indexed("case", static_cast<std::uint64_t>(it));
    const TokenSeq xt = random_xt(V, L, 0.5, it_rng);
    const double t = 0.2 + 0.6 * it_rng.next_double();
    const double z = std::exp(oracle::exact_log_partition(den, energy, xt, t, sched));
    max_err = std::max(max_err, std::abs(z - 1.0));
  }
  return {"coar-selfnorm", max_err <= 1e-8, "max |Z - 1| " + fmt(max_err)};
}

VerifyCheck check_partition_bracket(std::uint64_t seed) {
  RngStream rng = RngStream(seed).child("bracket");
  const Token V = 3;
  RngStream ar_rng = rng.child("ar");
  const ARModel ar = small_ar(V, 2, ar_rng);
  RngStream d_rng = rng.child("denoiser");
  const FactorizedDenoiser den = random_denoiser(V, 1, d_rng);
  const ArEnergy energy(ar, false);
  NoiseSchedule sched;
  const TokenSeq xt({V, 1, V, V}, V);
  const double t = 0.7;
  const double exact = oracle::exact_log_partition(den, energy, xt, t, sched);
  // Small n keeps the expected bracket margins well above the noise of the
  // rep means, so coverage is checked against a 3-se pad instead of exactly.
  double lo_sum = 0.0, hi_sum = 0.0, lo_sq = 0.0, hi_sq = 0.0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const BoundPair b = log_partition_bounds(den, energy, xt, t, sched, 32,
                                             rng.child_indexed("rep", r));
    if (b.upper < b.lower)
      return {"partition-bracket", false, "upper estimate below lower estimate"};
    lo_sum += b.lower;
    hi_sum += b.upper;
    lo_sq += b.lower * b.lower;
    hi_sq += b.upper * b.upper;
  }
  const double mean_lo = lo_sum / reps;
  const double mean_hi = hi_sum / reps;
  const double se_lo = std::sqrt(std::max(0.0, lo_sq / reps - mean_lo * mean_lo) / reps);
  const double se_hi = std::sqrt(std::max(0.0, hi_sq / reps - mean_hi * mean_hi) / reps);
  const bool pass = mean_lo - 3.0 * se_lo <= exact && exact <= mean_hi + 3.0 * se_hi;
  return {"partition-bracket", pass,
          "mean bracket [" + fmt(mean_lo) + ", " + fmt(mean_hi) + "] vs exact " + fmt(exact)};
}

VerifyCheck check_sampler_reduction(std::uint64_t seed) {
  RngStream rng = RngStream(seed).child("sampler");
  const Token V = 5;
  const std::size_t L = 8;
  RngStream d_rng = rng.child("denoiser");
  const FactorizedDenoiser den = random_denoiser(V, 1, d_rng);
  NceEnergy energy(V);
  RngStream e_rng = rng.child("energy");
  for (double& p : energy.params()) p = (e_rng.next_double() - 0.5) * 2.0;
  NoiseSchedule sched;
  SamplerConfig base_cfg;
  base_cfg.steps = 6;
  SamplerConfig k1 = base_cfg;
  k1.k = 1;
  k1.window = 1.0;
  SamplerConfig w0 = base_cfg;
  w0.k = 4;
  w0.window = 0.0;
  for (int i = 0; i < 20; ++i) {
    RngStream traj = rng.child_indexed("traj", static_cast<std::uint64_t>(i));
    const TokenSeq a = sample_base(den, sched, L, base_cfg, traj);
    const TokenSeq b = sample_energy(den, energy, sched, L, k1, traj);
    const TokenSeq c = sample_energy(den, energy, sched, L, w0, traj);
    if (!(a == b) || !(a == c))
      return {"sampler-reduction", false, "k=1 or w=0 trajectory diverged from base sampler"};
  }
  return {"sampler-reduction", true, "20 trajectories bit-identical (k=1 and w=0)"};
}

VerifyCheck check_nce_basics(std::uint64_t seed) {
  RngStream rng = RngStream(seed).child("nce");
  const Token V = 4;
  const std::size_t L = 6;
  NceEnergy zero(V);
  RngStream c_rng = rng.child("case");
  const TokenSeq pos = random_x0(V, L, c_rng);
  const TokenSeq neg = random_x0(V, L, c_rng);
  TokenSeq xt = pos;
  xt[1] = xt.mask_id();
  xt[4] = xt.mask_id();
  const double at_zero = nce_pair_loss(zero, pos, neg, xt, 0.4);
  if (std::abs(at_zero - 2.0 * std::log(2.0)) > 1e-12)
    return {"nce-basics", false, "pair loss at zero parameters is not 2 log 2"};

  NceEnergy energy(V);
  RngStream p_rng = rng.child("params");
  for (double& p : energy.params()) p = (p_rng.next_double() - 0.5) * 1.5;
  std::vector<double> grad(energy.feature_count(), 0.0);
  nce_pair_loss_grad(energy, pos, neg, xt, 0.4, grad);
  double max_rel = 0.0;
  const double h = 1e-6;
  RngStream coord_rng = rng.child("coords");
  for (int k = 0; k < 10; ++k) {
    const std::size_t j = static_cast<std::size_t>(
        coord_rng.next_double() * static_cast<double>(energy.feature_count()));
    const double save = energy.params()[j];
    energy.params()[j] = save + h;
    const double up = nce_pair_loss(energy, pos, neg, xt, 0.4);
    energy.params()[j] = save - h;
    const double dn = nce_pair_loss(energy, pos, neg, xt, 0.4);
    energy.params()[j] = save;
    const double fd = (up - dn) / (2.0 * h);
    const double denom = std::max(1e-8, std::abs(fd));
    max_rel = std::max(max_rel, std::abs(grad[j] - fd) / denom);
  }
  return {"nce-basics", max_rel <= 1e-4,
          "loss at zero exact; gradient vs finite differences max rel " + fmt(max_rel)};
}

VerifyCheck check_nelbo_consistency(std::uint64_t seed) {
  RngStream rng = RngStream(seed).child("nelbo");
  const Token V = 3;
  const std::size_t L = 4;
  RngStream d_rng = rng.child("denoiser");
  const FactorizedDenoiser den = random_denoiser(V, 1, d_rng);
  const ZeroEnergy energy;
  NoiseSchedule sched;
  RngStream x_rng = rng.child("x0");
  const TokenSeq x0 = random_x0(V, L, x_rng);
  const double exact = oracle::exact_nelbo_continuous(den, energy, x0, sched);
  NelboConfig cfg;
  cfg.mc_samples = 4000;
  const McEstimate est = nelbo_continuous(den, energy, x0, sched, cfg, rng.child("mc"));
  const double err = std::abs(est.mean - exact);
  const double allow = 4.0 * est.se + 1e-9;
  return {"nelbo-consistency", err <= allow,
          "mc " + fmt(est.mean) + " vs exact " + fmt(exact) + " (|diff| " + fmt(err) +
              ", allow " + fmt(allow) + ")"};
}

VerifyCheck check_quadrature(std::uint64_t) {
  const oracle::QuadRule rule = oracle::gauss_legendre(24, 0.0, 1.0);
  double p7 = 0.0, ex = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    p7 += rule.weights[i] * std::pow(rule.nodes[i], 7.0);
    ex += rule.weights[i] * std::exp(rule.nodes[i]);
  }
  const double e1 = std::abs(p7 - 1.0 / 8.0);
  const double e2 = std::abs(ex - (std::numbers::e - 1.0));
  const bool pass = e1 <= 1e-12 && e2 <= 1e-12;
  return {"quadrature", pass, "x^7 err " + fmt(e1) + ", exp err " + fmt(e2)};
}

VerifyCheck check_ar_hand_counts(std::uint64_t) {
  {
    const std::vector<Token> corpus{0, 0, 0, 0};
    const ARModel m = ar_fit(corpus, 2, 1, 0.0);
    const Token ctx0[] = {0};
    if (std::abs(m.cond_logprob(ctx0, 0) - 0.0) > 1e-15)
      return {"ar-hand-counts", false, "p(0|0) on '0000' with k=0 is not 1"};
  }
  {
    const std::vector<Token> corpus{0, 1, 0, 1};
    const ARModel m = ar_fit(corpus, 2, 1, 1.0);
    const Token ctx0[] = {0};
    // counts: 0->1 twice, 0->0 never; add-1 gives (2+1)/(2+2).
    if (std::abs(std::exp(m.cond_logprob(ctx0, 1)) - 0.75) > 1e-15)
      return {"ar-hand-counts", false, "p(1|0) on '0101' with k=1 is not 3/4"};
  }
  return {"ar-hand-counts", true, "closed-form count examples reproduced"};
}

}  // namespace

std::vector<VerifyCheck> verify_all(std::uint64_t seed) {
  using CheckFn = VerifyCheck (*)(std::uint64_t);
  const CheckFn checks[] = {
      check_rng_determinism, check_kernels,        check_schedule,
      check_posterior_oracle, check_tilted_ar,     check_coar_selfnorm,
      check_partition_bracket, check_sampler_reduction, check_nce_basics,
      check_nelbo_consistency, check_quadrature,   check_ar_hand_counts,
  };
  std::vector<VerifyCheck> out;
  for (CheckFn fn : checks) {
    try {
      out.push_back(fn(seed));
    } catch (const std::exception& e) {
      // The check's own name is unknown once it threw; report under a generic
      // name with the message, still a hard failure.
      out.push_back({"exception", false, e.what()});
    }
  }
  return out;
}

}  // namespace ebdiff
