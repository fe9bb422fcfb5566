#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <doctest.h>

#include "qpskin/errors.hpp"
#include "qpskin/kernel.hpp"
#include "qpskin/model.hpp"

using namespace qpskin;

namespace {

// Stationary kernel from the incomplete-gamma series.  With u = e^{-theta s},
//   int_0^inf e^{i delta s - Var(s)} ds = (1/theta) sum_k c^k / prod_{m=0..k} (z + m),
// c = sigma^2/theta^3, z = (sigma^2/theta^2 - i delta)/theta.
double stationary_series(double delta, double sigma, double theta) {
  const double c = sigma * sigma / (theta * theta * theta);
  const std::complex<double> z(sigma * sigma / (theta * theta * theta), -delta / theta);
  std::complex<double> term = 1.0 / z, sum = term;
  for (int k = 1; k < 1'000'000; ++k) {
    term *= c / (z + static_cast<double>(k));
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sum.real() / theta;
}

// Composite 5-point Gauss-Legendre over [0, t].
double gauss_legendre(double delta, double sigma, double theta, double t, int panels) {
  static const double x[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                              0.9061798459386640};
  static const double w[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                              0.2369268850561891, 0.2369268850561891};
  auto f = [&](double s) {
    const double var = sigma * sigma / (theta * theta) * (s - (-std::expm1(-theta * s)) / theta);
    return std::cos(delta * s) * std::exp(-var);
  };
  const double h = t / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * h;
    for (int i = 0; i < 5; ++i) sum += w[i] * f(mid + 0.5 * h * x[i]);
  }
  return 0.5 * h * sum;
}

KernelQuery query(double W, double sigma, double t = KernelQuery::stationary, std::size_t j = 50) {
  KernelQuery q;
  q.j = j;
  q.W = W;
  q.beta = golden_beta;
  q.sigma = sigma;
  q.theta = 1.0;
  q.t = t;
  return q;
}

}  // namespace

TEST_CASE("phase_variance: limits") {
  CHECK(phase_variance(0.0, 10.0, 1.0) == 0.0);
  CHECK(phase_variance(1e-3, 10.0, 1.0) == doctest::Approx(5e-5).epsilon(0.01));
  CHECK(phase_variance(100.0, 10.0, 1.0) == doctest::Approx(9900.0).epsilon(1e-12));
  // Closed form at a generic point.
  const double s = 0.7, sig = 3.0, th = 2.0;
  CHECK(phase_variance(s, sig, th) ==
        doctest::Approx(sig * sig / (th * th) * (s - (1.0 - std::exp(-th * s)) / th)).epsilon(1e-13));
  CHECK_THROWS_AS(phase_variance(-1.0, 1.0, 1.0), ParameterError);
}

TEST_CASE("detuning matches the on-site energy difference") {
  LatticeModel m;
  m.W = 5.0;
  for (std::size_t j : {1, 17, 50, 99}) {
    const auto q = query(5.0, 1.0, KernelQuery::stationary, j);
    CHECK(q.detuning() == doctest::Approx(m.onsite(j) - m.onsite(j + 1)).epsilon(1e-10));
    CHECK(q.left_bond().detuning() == doctest::Approx(m.onsite(j - 1) - m.onsite(j)).epsilon(1e-10));
  }
}

TEST_CASE("req_exact: stationary value against the incomplete-gamma series") {
  for (double W : {0.0, 5.0, 10.0})
    for (double sigma : {1.0, 2.57, 10.0, 30.0, 100.0}) {
      CAPTURE(W);
      CAPTURE(sigma);
      const auto q = query(W, sigma);
      CHECK(std::abs(req_exact(q) - stationary_series(q.detuning(), sigma, 1.0)) < 1e-8);
    }
  // Non-unit theta.
  KernelQuery q = query(3.0, 4.0);
  q.theta = 2.5;
  CHECK(std::abs(req_exact(q) - stationary_series(q.detuning(), 4.0, 2.5)) < 1e-8);
}

TEST_CASE("req_exact: finite t against Gauss-Legendre") {
  for (double t : {0.01, 0.5, 3.0}) {
    CAPTURE(t);
    const auto q = query(5.0, 10.0, t);
    CHECK(std::abs(req_exact(q) - gauss_legendre(q.detuning(), 10.0, 1.0, t, 4000)) < 1e-8);
  }
}

TEST_CASE("req_exact: W = 0 is not the Laplace value theta^2/sigma^2") {
  // The stationary closed forms replace Var(s) by its linear asymptote; the
  // quadratic start of Var dominates once sigma > theta, so at sigma = 10 the
  // exact kernel sits near the strong-noise asymptote rather than at 0.01.
  const double exact = req_exact(query(0.0, 10.0));
  CHECK(exact == doctest::Approx(stationary_series(0.0, 10.0, 1.0)).epsilon(1e-7));
  CHECK(std::abs(exact / req_strong_noise(10.0, 1.0) - 1.0) < 0.05);
  CHECK(req_longtime(query(0.0, 10.0)) == doctest::Approx(0.01));
}

TEST_CASE("req_exact: monotone in t without detuning, converging to the stationary value") {
  double prev = 0.0;
  for (double t = 0.05; t <= 3.0; t += 0.05) {
    const double v = req_exact(query(0.0, 10.0, t));
    CHECK(v >= prev - 1e-8);  // flat to quadrature tolerance once the envelope has died
    prev = v;
  }
  // With detuning the integrand turns negative and req_exact(t) overshoots
  // before settling; only convergence holds.
  const double limit = req_exact(query(5.0, 10.0));
  CHECK(req_exact(query(5.0, 10.0, 0.2)) > limit + 1e-3);
  CHECK(std::abs(req_exact(query(5.0, 10.0, 5.0)) - limit) < 1e-8);
  CHECK(std::abs(req_exact(query(0.0, 10.0, 5.0)) - req_exact(query(0.0, 10.0))) < 1e-8);
  CHECK_THROWS_AS(req_exact(query(5.0, 0.0)), ParameterError);
  CHECK_THROWS_AS(req_exact(query(5.0, 1.0, 0.0)), ParameterError);
}

TEST_CASE("req_exact: envelope truncation") {
  const auto info = req_exact_detailed(query(5.0, 10.0));
  CHECK(phase_variance(info.upper_limit, 10.0, 1.0) == doctest::Approx(-std::log(1e-12)).epsilon(1e-9));
  CHECK(info.panels >= 128);
}

TEST_CASE("req_shorttime: limits and truncation error") {
  CHECK(req_shorttime(query(10.0, 10.0, 0.0)) == 0.0);
  CHECK(req_shorttime(query(0.0, 0.0, 0.37)) == 0.37);

  // First neglected Taylor term of the integrand gives +sigma^2 t^4/24 (theta = 1).
  for (double t : {0.01, 0.005}) {
    CAPTURE(t);
    const auto q = query(10.0, 10.0, t);
    const double d = q.detuning();
    const double oracle = gauss_legendre(d, 10.0, 1.0, t, 200);
    const double next = 100.0 * std::pow(t, 4) / 24.0;
    const double c4 = 1e4 / 8.0 + d * d * 100.0 / 4.0 + std::pow(d, 4) / 24.0 - 100.0 / 24.0;
    const double gap = oracle - req_shorttime(q);
    CHECK(std::abs(gap - next - c4 * std::pow(t, 5) / 5.0) < 0.25 * (next + std::abs(c4) * std::pow(t, 5) / 5.0));
  }
}

TEST_CASE("req_longtime: closed-form properties") {
  KernelQuery q = query(5.0, 3.0, KernelQuery::stationary, 1);
  q.beta = 1.0 / 3.0;  // sin(pi beta (2j+1)) = sin(pi) at j = 1
  CHECK(req_longtime(q) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));

  double prev = req_longtime(query(0.0, 5.0));
  for (double W : {1.0, 10.0, 100.0, 1e4}) {
    const double v = req_longtime(query(W, 5.0));
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < 1e-6);

  for (std::size_t j = 1; j <= 200; ++j) {
    const double v = req_longtime(query(5.0, 4.0, KernelQuery::stationary, j));
    CHECK(v > 0.0);
    CHECK(v <= 1.0 / 16.0 + 1e-15);
  }
  CHECK_THROWS_AS(req_longtime(query(5.0, 0.0)), ParameterError);
}

TEST_CASE("req_longtime_avg: values and spatial average") {
  CHECK(req_longtime_avg(0.0, golden_beta, 10.0, 1.0) == doctest::Approx(0.01));
  const double s2 = std::pow(std::sin(std::numbers::pi * golden_beta), 2);
  CHECK(req_longtime_avg(5.0, golden_beta, 5.0, 1.0) == doctest::Approx(25.0 / (625.0 + 50.0 * s2)));
  CHECK(req_longtime_avg(5.0, golden_beta, 5.0, 1.0) == doctest::Approx(0.0374).epsilon(0.002));

  // sin^2(pi beta (2j+1)) is equidistributed, so the site average of
  // s^2/(s^4 + b sin^2) is s^2/sqrt(s^4 (s^4 + b)); the closed form replaces
  // sin^2 by its mean 1/2, which only agrees once s^4 >> b = 4 W^2 sin^2(pi beta).
  const double b = 4.0 * 25.0 * s2;
  for (double sigma : {2.0, 5.0, 10.0}) {
    double sum = 0.0;
    for (std::size_t j = 1; j <= 10000; ++j) sum += req_longtime(query(5.0, sigma, KernelQuery::stationary, j));
    const double empirical = sum / 10000.0;
    const double s4 = std::pow(sigma, 4);
    CAPTURE(sigma);
    CHECK(std::abs(empirical / (sigma * sigma / std::sqrt(s4 * (s4 + b))) - 1.0) < 0.005);
    const double closed = req_longtime_avg(5.0, golden_beta, sigma, 1.0);
    if (sigma >= 5.0) CHECK(std::abs(empirical / closed - 1.0) < 0.005);
    else CHECK(empirical > 1.4 * closed);
  }
  CHECK_THROWS_AS(req_longtime_avg(5.0, golden_beta, 0.0, 1.0), ParameterError);
}

TEST_CASE("req_strong_noise: values") {
  CHECK(req_strong_noise(10.0, 1.0) == doctest::Approx(0.12533).epsilon(1e-4));
  CHECK(req_strong_noise(10.0, 4.0) == doctest::Approx(0.25066).epsilon(1e-4));
  CHECK(req_strong_noise(1e12, 1.0) < 1e-11);
}

TEST_CASE("req_exact approaches the strong-noise asymptote") {
  double prev = 1.0;
  for (double sigma : {20.0, 50.0, 100.0, 300.0}) {
    const double r = std::abs(req_exact(query(5.0, sigma)) / req_strong_noise(sigma, 1.0) - 1.0);
    CAPTURE(sigma);
    CHECK(r < prev);
    prev = r;
  }
  CHECK(prev < 0.01);
}

TEST_CASE("req_longtime underestimates req_exact at strong noise") {
  for (double sigma : {20.0, 40.0, 80.0}) {
    CAPTURE(sigma);
    CHECK(req_longtime(query(5.0, sigma)) < req_exact(query(5.0, sigma)));
  }
}

TEST_CASE("sigma_max: value, theta scaling and golden-section oracle") {
  CHECK(sigma_max(5.0, 1.0, golden_beta) == doctest::Approx(2.57).epsilon(0.005));
  CHECK(sigma_max(5.0, 2.0, golden_beta) == doctest::Approx(2.0 * sigma_max(5.0, 1.0, golden_beta)));
  CHECK_THROWS_AS(sigma_max(0.0, 1.0, golden_beta), ParameterError);

  auto f = [](double s) { return req_longtime_avg(5.0, golden_beta, s, 1.0); };
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 0.1, b = 20.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
    if (f(c) > f(d)) b = d;
    else a = c;
    c = b - g * (b - a);
    d = a + g * (b - a);
  }
  CHECK(std::abs(0.5 * (a + b) / sigma_max(5.0, 1.0, golden_beta) - 1.0) < 1e-6);
}

TEST_CASE("req_longtime_avg is unimodal in sigma") {
  const double peak = sigma_max(5.0, 1.0, golden_beta);
  double prev = 0.0;
  bool descending = false;
  for (double s = 0.05; s < 40.0; s += 0.05) {
    const double v = req_longtime_avg(5.0, golden_beta, s, 1.0);
    if (v < prev) {
      if (!descending) CHECK(std::abs(s - 0.05 - peak) < 0.05);
      descending = true;
    } else {
      CHECK_FALSE(descending);
    }
    prev = v;
  }
  CHECK(descending);
}
