#include "ebdiff/schedule.hpp"

#include <cmath>
#include <string>

#include "ebdiff/errors.hpp"

namespace ebdiff {

std::string_view to_string(ScheduleKind k) {
  return k == ScheduleKind::linear ? "linear" : "loglinear";
}

ScheduleKind schedule_kind_from_string(std::string_view s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "loglinear") return ScheduleKind::loglinear;
  throw ConfigError("unknown schedule kind '" + std::string(s) + "'");
}

namespace {
void check_args(const NoiseSchedule& sched, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("schedule time outside [0,1]");
  if (!(sched.eps >= 0.0 && sched.eps < 0.5)) throw DomainError("schedule eps outside [0, 0.5)");
  if (sched.kind == ScheduleKind::loglinear && !(sched.c > 0.0))
    throw DomainError("loglinear exponent must be positive");
}
}  // namespace

double NoiseSchedule::alpha(double t) const {
  check_args(*this, t);
  double a = kind == ScheduleKind::linear ? 1.0 - t : 1.0 - std::pow(t, c);
  if (a < eps) a = eps;
  if (a > 1.0 - eps) a = 1.0 - eps;
  return a;
}

double NoiseSchedule::alpha_prime(double t) const {
  check_args(*this, t);
  switch (kind) {
    case ScheduleKind::linear:
      return -1.0;
    case ScheduleKind::loglinear:
      return -c * std::pow(t, c - 1.0);
  }
  return 0.0;  // unreachable
}

double NoiseSchedule::alpha_ratio(double s, double t) const {
  if (!(s <= t)) throw DomainError("alpha_ratio requires s <= t");
  return alpha(t) / alpha(s);
}

}  // namespace ebdiff
