#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "ebdiff/kernels.hpp"
#include "ebdiff/rng.hpp"

using namespace ebdiff;
namespace k = ebdiff::kernels;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Restores whichever backend was active when the guard was built.
struct BackendGuard {
  std::string saved;
  BackendGuard() : saved(k::active_name()) {}
  ~BackendGuard() { k::force_backend(saved); }
};

std::vector<double> random_vec(std::size_t n, RngStream& rng, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.next_double();
  return v;
}

double rel_diff(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace

TEST_CASE("scalar reductions on hand vectors") {
  BackendGuard guard;
  k::force_backend("scalar");
  const auto& b = k::active();
  std::vector<double> v{3.0, -1.0, 4.0, 1.5};
  CHECK(b.reduce_max(v) == 4.0);
  CHECK(b.reduce_sum(v) == doctest::Approx(7.5).epsilon(1e-15));
  CHECK(b.reduce_sum_sq(v) == doctest::Approx(9.0 + 1.0 + 16.0 + 2.25).epsilon(1e-15));
  std::vector<double> w{1.0, 2.0, 3.0, 4.0};
  CHECK(b.dot(v, w) == doctest::Approx(3.0 - 2.0 + 12.0 + 6.0).epsilon(1e-15));
}

TEST_CASE("scalar vector updates") {
  BackendGuard guard;
  k::force_backend("scalar");
  const auto& b = k::active();
  std::vector<double> dst{1.0, 2.0, 3.0};
  std::vector<double> src{10.0, 20.0, 30.0};
  b.add(dst, src);
  CHECK(dst == std::vector<double>{11.0, 22.0, 33.0});
  b.axpy(dst, -0.5, src);
  CHECK(dst == std::vector<double>{6.0, 12.0, 18.0});
  b.scale(dst, 2.0);
  CHECK(dst == std::vector<double>{12.0, 24.0, 36.0});
}

TEST_CASE("log_sum_exp edge cases") {
  std::vector<double> empty;
  CHECK(k::log_sum_exp(empty) == -kInf);
  std::vector<double> allneg{-kInf, -kInf};
  CHECK(k::log_sum_exp(allneg) == -kInf);
  std::vector<double> single{3.25};
  CHECK(k::log_sum_exp(single) == doctest::Approx(3.25).epsilon(1e-15));
  std::vector<double> logs{std::log(2.0), std::log(3.0)};
  CHECK(k::log_sum_exp(logs) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  // shift safety: naive exp would overflow
  std::vector<double> big{1000.0, 1000.0};
  CHECK(k::log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
  std::vector<double> mixed{-kInf, 0.5, -kInf};
  CHECK(k::log_sum_exp(mixed) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax and log_softmax") {
  std::vector<double> logits{0.0, std::log(3.0)};
  std::vector<double> p(2), lp(2);
  double lse = k::softmax(logits, p);
  CHECK(lse == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));

  double lse2 = k::log_softmax(logits, lp);
  CHECK(lse2 == doctest::Approx(lse).epsilon(1e-15));
  CHECK(lp[0] == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  CHECK(lp[1] == doctest::Approx(std::log(0.75)).epsilon(1e-14));

  // -inf logits carry exactly zero mass
  std::vector<double> holey{-kInf, 1.0, -kInf};
  std::vector<double> hp(3);
  k::softmax(holey, hp);
  CHECK(hp[0] == 0.0);
  CHECK(hp[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(hp[2] == 0.0);
}

TEST_CASE("exp_shift_sum maps -inf to zero") {
  BackendGuard guard;
  for (const char* name : {"scalar", "avx2"}) {
    if (std::string(name) == "avx2" && !k::detail::avx2_supported()) continue;
    k::force_backend(name);
    const auto& b = k::active();
    std::vector<double> in{0.0, -kInf, std::log(2.0)};
    std::vector<double> out(3);
    double s = b.exp_shift_sum(in, 0.0, out);
    CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out[1] == 0.0);
    CHECK(out[2] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s == doctest::Approx(3.0).epsilon(1e-12));
  }
}

TEST_CASE("force_backend selects and reports") {
  BackendGuard guard;
  k::force_backend("scalar");
  CHECK(k::active_name() == "scalar");
  if (k::detail::avx2_supported()) {
    k::force_backend("avx2");
    CHECK(k::active_name() == "avx2");
  }
  CHECK_THROWS(k::force_backend("sse9"));
}

TEST_CASE("scalar and avx2 backends agree") {
  if (!k::detail::avx2_supported()) return;
  const auto& s = k::detail::scalar_backend;
  const auto& a = k::detail::avx2_backend();
  RngStream rng(2024);

  for (std::size_t n : {1u, 2u, 3u, 7u, 8u, 16u, 33u, 64u, 67u}) {
    std::vector<double> x = random_vec(n, rng, -10.0, 10.0);
    std::vector<double> y = random_vec(n, rng, -10.0, 10.0);
    if (n >= 3) x[n / 2] = -kInf;  // reductions must pass -inf through

    CHECK(s.reduce_max(x) == a.reduce_max(x));
    CHECK(rel_diff(s.reduce_sum(y), a.reduce_sum(y)) < 1e-12);
    CHECK(rel_diff(s.reduce_sum_sq(y), a.reduce_sum_sq(y)) < 1e-12);
    CHECK(rel_diff(s.dot(y, y), a.dot(y, y)) < 1e-12);

    std::vector<double> d1 = y, d2 = y;
    s.add(d1, y);
    a.add(d2, y);
    for (std::size_t i = 0; i < n; ++i) CHECK(rel_diff(d1[i], d2[i]) < 1e-12);
    s.axpy(d1, 0.37, y);
    a.axpy(d2, 0.37, y);
    for (std::size_t i = 0; i < n; ++i) CHECK(rel_diff(d1[i], d2[i]) < 1e-12);
    s.scale(d1, -1.25);
    a.scale(d2, -1.25);
    for (std::size_t i = 0; i < n; ++i) CHECK(rel_diff(d1[i], d2[i]) < 1e-12);

    std::vector<double> o1(n), o2(n);
    double shift = s.reduce_max(x);
    double s1 = s.exp_shift_sum(x, shift, o1);
    double s2 = a.exp_shift_sum(x, shift, o2);
    CHECK(rel_diff(s1, s2) < 1e-12);
    for (std::size_t i = 0; i < n; ++i) CHECK(rel_diff(o1[i], o2[i]) < 1e-12);
  }
}

TEST_CASE("composites match under either backend") {
  if (!k::detail::avx2_supported()) return;
  BackendGuard guard;
  RngStream rng(55);
  for (std::size_t n : {1u, 5u, 31u, 128u}) {
    std::vector<double> logits = random_vec(n, rng, -30.0, 30.0);
    k::force_backend("scalar");
    double l1 = k::log_sum_exp(logits);
    std::vector<double> p1(n);
    k::softmax(logits, p1);
    k::force_backend("avx2");
    double l2 = k::log_sum_exp(logits);
    std::vector<double> p2(n);
    k::softmax(logits, p2);
    CHECK(rel_diff(l1, l2) < 1e-12);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p1[i] - p2[i]) < 1e-13);
  }
}
