#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Vectorizable numeric primitives used by the hot paths (softmax rows, log-sum-exp
// reductions, gradient axpy). Each operation has a scalar reference implementation
// and an AVX2 variant; the active backend is picked once at startup from CPUID,
// overridable via the EBDIFF_KERNELS environment variable ("scalar" | "avx2") or
// force_backend() in tests. Backends agree to within a few ulp (exp is a polynomial
// on the AVX2 path); the equivalence suite pins the tolerance.
//
// All functions are pure and touch only their arguments, so they are safe to call
// from concurrent contexts.
namespace ebdiff::kernels {

struct Backend {
  std::string_view name;

  double (*reduce_max)(std::span<const double>);
  double (*reduce_sum)(std::span<const double>);
  double (*reduce_sum_sq)(std::span<const double>);
  double (*dot)(std::span<const double>, std::span<const double>);
  // dst += src
  void (*add)(std::span<double> dst, std::span<const double> src);
  // dst += a * x
  void (*axpy)(std::span<double> dst, double a, std::span<const double> x);
  void (*scale)(std::span<double> dst, double a);
  // out[i] = exp(in[i] - shift); returns sum(out). Inputs of -inf map to 0.
  double (*exp_shift_sum)(std::span<const double> in, double shift, std::span<double> out);
};

const Backend& active();
std::string_view active_name();
// Test hook; "scalar" always exists, "avx2" only where the CPU supports it.
void force_backend(std::string_view name);

// --- composites (backend-independent code on top of the primitives) ---

// log(sum_i exp(x[i])), max-shifted. Empty input or all -inf yields -inf.
double log_sum_exp(std::span<const double> x);

// probs[i] = exp(logits[i]) / sum_j exp(logits[j]); returns log of the partition
// (the log-sum-exp) as a byproduct.
double softmax(std::span<const double> logits, std::span<double> probs);

// out[i] = logits[i] - log_sum_exp(logits).
double log_softmax(std::span<const double> logits, std::span<double> out);

namespace detail {
extern const Backend scalar_backend;
bool avx2_supported();
const Backend& avx2_backend();  // only call when avx2_supported()
}  // namespace detail

}  // namespace ebdiff::kernels
