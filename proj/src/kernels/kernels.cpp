#include "ebdiff/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "ebdiff/errors.hpp"

namespace ebdiff::kernels {

namespace detail {
bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

#if !(defined(__x86_64__) || defined(_M_X64))
const Backend& avx2_backend() { throw ConfigError("AVX2 backend not built on this target"); }
#endif
}  // namespace detail

namespace {

const Backend* resolve_initial() {
  if (const char* env = std::getenv("EBDIFF_KERNELS")) {
    std::string want(env);
    if (want == "scalar") return &detail::scalar_backend;
    if (want == "avx2") {
      if (!detail::avx2_supported()) throw ConfigError("EBDIFF_KERNELS=avx2 but CPU lacks AVX2/FMA");
      return &detail::avx2_backend();
    }
    throw ConfigError("EBDIFF_KERNELS must be 'scalar' or 'avx2', got '" + want + "'");
  }
  return detail::avx2_supported() ? &detail::avx2_backend() : &detail::scalar_backend;
}

const Backend*& current() {
  static const Backend* b = resolve_initial();
  return b;
}

}  // namespace

const Backend& active() { return *current(); }
std::string_view active_name() { return current()->name; }

void force_backend(std::string_view name) {
  if (name == "scalar") {
    current() = &detail::scalar_backend;
  } else if (name == "avx2") {
    if (!detail::avx2_supported()) throw ConfigError("CPU lacks AVX2/FMA");
    current() = &detail::avx2_backend();
  } else {
    throw ConfigError("unknown kernel backend '" + std::string(name) + "'");
  }
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const Backend& b = active();
  double m = b.reduce_max(x);
  if (!std::isfinite(m)) return m;  // all -inf, or a +inf/NaN dominates
  // scratch on the stack for small inputs, heap otherwise
  constexpr std::size_t kStack = 256;
  if (x.size() <= kStack) {
    double buf[kStack];
    double s = b.exp_shift_sum(x, m, {buf, x.size()});
    return m + std::log(s);
  }
  std::vector<double> buf(x.size());
  double s = b.exp_shift_sum(x, m, buf);
  return m + std::log(s);
}

double softmax(std::span<const double> logits, std::span<double> probs) {
  if (logits.empty()) throw DomainError("softmax over empty support");
  const Backend& b = active();
  double m = b.reduce_max(logits);
  if (!std::isfinite(m)) throw DomainError("softmax requires a finite maximum logit");
  double s = b.exp_shift_sum(logits, m, probs);
  b.scale(probs, 1.0 / s);
  return m + std::log(s);
}

double log_softmax(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) throw DomainError("log_softmax over empty support");
  double lse = log_sum_exp(logits);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return lse;
}

}  // namespace ebdiff::kernels
