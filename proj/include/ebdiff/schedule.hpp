#pragma once

#include <string>
#include <string_view>

namespace ebdiff {

enum class ScheduleKind { linear, loglinear };

std::string_view to_string(ScheduleKind k);
ScheduleKind schedule_kind_from_string(std::string_view s);

// Masking schedule alpha(t): the probability that a position is still unmasked
// at time t. alpha is clamped to [eps, 1-eps] so downstream ratios stay finite;
// alpha_prime deliberately returns the analytic derivative of the UNclamped
// curve (the likelihood-bound integrands rely on that, see eval.cpp).
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  double eps = 1e-4;
  double c = 1.0;  // loglinear exponent; c=1 coincides with linear

  // Survival probability at t, in [eps, 1-eps]. t outside [0,1] is a domain error.
  double alpha(double t) const;
  // d alpha/dt of the unclamped schedule (linear: -1; loglinear: -c t^(c-1)).
  double alpha_prime(double t) const;
  // Conditional survival alpha(t)/alpha(s) for s <= t; equals 1 at s == t.
  double alpha_ratio(double s, double t) const;
  // Mask level 1 - alpha(t); this is the scalar models condition on.
  double mask_level(double t) const { return 1.0 - alpha(t); }
};

}  // namespace ebdiff
