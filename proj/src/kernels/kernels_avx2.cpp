// AVX2+FMA backend. Compiled with -mavx2 -mfma for this translation unit only;
// callers reach it through the dispatch table, never directly.
#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>
#include <cstdint>
#include <limits>

#include "ebdiff/kernels.hpp"

namespace ebdiff::kernels::detail {
namespace {

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d m = _mm_max_pd(lo, hi);
  m = _mm_max_sd(m, _mm_unpackhi_pd(m, m));
  return _mm_cvtsd_f64(m);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d s = _mm_add_pd(lo, hi);
  s = _mm_add_sd(s, _mm_unpackhi_pd(s, s));
  return _mm_cvtsd_f64(s);
}

double v_reduce_max(std::span<const double> x) {
  const double* p = x.data();
  std::size_t n = x.size();
  double m = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  if (n >= 4) {
    __m256d acc = _mm256_loadu_pd(p);
    for (i = 4; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(p + i));
    m = hmax(acc);
  }
  for (; i < n; ++i) m = p[i] > m ? p[i] : m;
  return m;
}

double v_reduce_sum(std::span<const double> x) {
  const double* p = x.data();
  std::size_t n = x.size();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(p + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += p[i];
  return s;
}

double v_reduce_sum_sq(std::span<const double> x) {
  const double* p = x.data();
  std::size_t n = x.size();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(p + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += p[i] * p[i];
  return s;
}

double v_dot(std::span<const double> a, std::span<const double> b) {
  const double* pa = a.data();
  const double* pb = b.data();
  std::size_t n = a.size();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(pa + i), _mm256_loadu_pd(pb + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += pa[i] * pb[i];
  return s;
}

void v_add(std::span<double> dst, std::span<const double> src) {
  double* pd = dst.data();
  const double* ps = src.data();
  std::size_t n = dst.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(pd + i, _mm256_add_pd(_mm256_loadu_pd(pd + i), _mm256_loadu_pd(ps + i)));
  for (; i < n; ++i) pd[i] += ps[i];
}

void v_axpy(std::span<double> dst, double a, std::span<const double> x) {
  double* pd = dst.data();
  const double* px = x.data();
  std::size_t n = dst.size();
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(pd + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(px + i), _mm256_loadu_pd(pd + i)));
  for (; i < n; ++i) pd[i] += a * px[i];
}

void v_scale(std::span<double> dst, double a) {
  double* pd = dst.data();
  std::size_t n = dst.size();
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(pd + i, _mm256_mul_pd(va, _mm256_loadu_pd(pd + i)));
  for (; i < n; ++i) pd[i] *= a;
}

// exp on 4 lanes, cephes-style: range-reduce by n = round(x*log2(e)), rational
// polynomial in the reduced argument, two-step ldexp so 2^n never overflows an
// exponent field even at n = 1024 or deep in the denormal range. Arguments below
// the underflow edge give exactly 0, above the overflow edge exactly +inf.
inline __m256d exp4(__m256d x0) {
  const __m256d kLog2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d kC1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d kC2 = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d kP0 = _mm256_set1_pd(1.26177193074810590878e-4);
  const __m256d kP1 = _mm256_set1_pd(3.02994407707441961300e-2);
  const __m256d kP2 = _mm256_set1_pd(9.99999999999999999910e-1);
  const __m256d kQ0 = _mm256_set1_pd(3.00198505138664455042e-6);
  const __m256d kQ1 = _mm256_set1_pd(2.52448340349684104192e-3);
  const __m256d kQ2 = _mm256_set1_pd(2.27265548208155028766e-1);
  const __m256d kQ3 = _mm256_set1_pd(2.00000000000000000005e0);
  const __m256d kLoEdge = _mm256_set1_pd(-745.1332191019412);  // exp() underflows to 0 below
  const __m256d kHiEdge = _mm256_set1_pd(709.782712893384);    // exp() overflows above

  __m256d lo_mask = _mm256_cmp_pd(x0, kLoEdge, _CMP_LT_OQ);
  __m256d hi_mask = _mm256_cmp_pd(x0, kHiEdge, _CMP_GT_OQ);
  __m256d x = _mm256_min_pd(_mm256_max_pd(x0, kLoEdge), kHiEdge);

  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, kLog2e),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(n, kC1, x);
  x = _mm256_fnmadd_pd(n, kC2, x);

  __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_fmadd_pd(kP0, xx, kP1);
  px = _mm256_fmadd_pd(px, xx, kP2);
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_fmadd_pd(kQ0, xx, kQ1);
  qx = _mm256_fmadd_pd(qx, xx, kQ2);
  qx = _mm256_fmadd_pd(qx, xx, kQ3);
  __m256d y = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  y = _mm256_fmadd_pd(_mm256_set1_pd(2.0), y, _mm256_set1_pd(1.0));

  // ldexp(y, n) as y * 2^a * 2^b with a = n>>1, b = n-a; both factors stay normal.
  __m128i ni = _mm256_cvtpd_epi32(n);
  __m128i ai = _mm_srai_epi32(ni, 1);
  __m128i bi = _mm_sub_epi32(ni, ai);
  const __m128i bias = _mm_set1_epi32(1023);
  __m256i a64 = _mm256_slli_epi64(_mm256_cvtepi32_epi64(_mm_add_epi32(ai, bias)), 52);
  __m256i b64 = _mm256_slli_epi64(_mm256_cvtepi32_epi64(_mm_add_epi32(bi, bias)), 52);
  y = _mm256_mul_pd(_mm256_mul_pd(y, _mm256_castsi256_pd(a64)), _mm256_castsi256_pd(b64));

  y = _mm256_andnot_pd(lo_mask, y);
  y = _mm256_blendv_pd(y, _mm256_set1_pd(std::numeric_limits<double>::infinity()), hi_mask);
  return y;
}

double v_exp_shift_sum(std::span<const double> in, double shift, std::span<double> out) {
  const double* p = in.data();
  double* q = out.data();
  std::size_t n = in.size();
  __m256d vshift = _mm256_set1_pd(shift);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d e = exp4(_mm256_sub_pd(_mm256_loadu_pd(p + i), vshift));
    _mm256_storeu_pd(q + i, e);
    acc = _mm256_add_pd(acc, e);
  }
  double s = hsum(acc);
  if (i < n) {
    // run the tail through the same polynomial so both paths round identically
    alignas(32) double buf_in[4] = {0, 0, 0, 0};
    alignas(32) double buf_out[4];
    std::size_t tail = n - i;
    for (std::size_t j = 0; j < tail; ++j) buf_in[j] = p[i + j] - shift;
    _mm256_store_pd(buf_out, exp4(_mm256_load_pd(buf_in)));
    for (std::size_t j = 0; j < tail; ++j) {
      q[i + j] = buf_out[j];
      s += buf_out[j];
    }
  }
  return s;
}

}  // namespace

static const Backend avx2_backend_table = {
    "avx2",          v_reduce_max, v_reduce_sum, v_reduce_sum_sq,
    v_dot,           v_add,        v_axpy,       v_scale,
    v_exp_shift_sum,
};

const Backend& avx2_backend() { return avx2_backend_table; }

}  // namespace ebdiff::kernels::detail

#endif  // __AVX2__ && __FMA__
