#include <cmath>
#include <limits>

#include "ebdiff/kernels.hpp"

// Reference backend. Straight loops, no reassociation tricks: this is the
// semantics the AVX2 variants are tested against.
namespace ebdiff::kernels::detail {
namespace {

double s_reduce_max(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = v > m ? v : m;
  return m;
}

double s_reduce_sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

double s_reduce_sum_sq(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double s_dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void s_add(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void s_axpy(std::span<double> dst, double a, std::span<const double> x) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * x[i];
}

void s_scale(std::span<double> dst, double a) {
  for (double& v : dst) v *= a;
}

double s_exp_shift_sum(std::span<const double> in, double shift, std::span<double> out) {
  double s = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    double e = std::exp(in[i] - shift);
    out[i] = e;
    s += e;
  }
  return s;
}

}  // namespace

const Backend scalar_backend = {
    "scalar",        s_reduce_max, s_reduce_sum, s_reduce_sum_sq,
    s_dot,           s_add,        s_axpy,       s_scale,
    s_exp_shift_sum,
};

}  // namespace ebdiff::kernels::detail
