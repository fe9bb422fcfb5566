#include "qpskin/kernel.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "qpskin/errors.hpp"

namespace qpskin {

namespace {

constexpr double kEnvelopeCutoff = 27.631021115928547;  // -ln(1e-12)
constexpr std::size_t kMaxPanels = std::size_t{1} << 24;

void require_positive_sigma(double sigma, const char* what) {
  if (!(sigma > 0.0))
    throw ParameterError(std::string(what) + ": sigma must be > 0 (got " +
                         std::to_string(sigma) + ")");
}

void require_positive_theta(double theta) {
  if (!(theta > 0.0))
    throw ParameterError("OU rate theta must be > 0 (got " + std::to_string(theta) + ")");
}

// x - (1 - e^{-x}) without cancellation for small x.
double shifted_decay(double x) {
  if (x < 1e-3) return x * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)));
  return x + std::expm1(-x);
}

double sin2_pi_beta(double beta) {
  const double s = std::sin(std::numbers::pi * beta);
  return s * s;
}

}  // namespace

double KernelQuery::detuning() const {
  const double pb = std::numbers::pi * beta;
  return 2.0 * W * std::sin(pb * (2.0 * static_cast<double>(j) + 1.0)) * std::sin(pb);
}

KernelQuery KernelQuery::left_bond() const {
  if (j == 0) throw ParameterError("left_bond: site 0 has no left neighbour");
  KernelQuery q = *this;
  q.j = j - 1;
  return q;
}

double phase_variance(double dt, double sigma, double theta) {
  require_positive_theta(theta);
  if (dt < 0.0) throw ParameterError("phase_variance: dt must be >= 0");
  return sigma * sigma / (theta * theta * theta) * shifted_decay(theta * dt);
}

QuadratureInfo req_exact_detailed(const KernelQuery& q, double abs_tol) {
  require_positive_theta(q.theta);
  if (!(q.t > 0.0)) throw ParameterError("req_exact: t must be > 0");
  if (!(abs_tol > 0.0)) throw ParameterError("req_exact: tolerance must be > 0");

  double upper = q.t;
  if (std::isinf(q.t)) {
    require_positive_sigma(q.sigma, "req_exact at t = infinity");
    // Var grows like (sigma/theta)^2 s at large s, so doubling terminates.
    upper = 1.0 / q.theta;
    while (phase_variance(upper, q.sigma, q.theta) < kEnvelopeCutoff) upper *= 2.0;
    double lo = 0.5 * upper, hi = upper;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (phase_variance(mid, q.sigma, q.theta) < kEnvelopeCutoff ? lo : hi) = mid;
    }
    upper = hi;
  }

  const double delta = q.detuning();
  auto f = [&](double s) { return std::cos(delta * s) * std::exp(-phase_variance(s, q.sigma, q.theta)); };

  // Panel count n (even); ends + odd + even sums are reused across doublings.
  std::size_t n = 64;
  double h = upper / static_cast<double>(n);
  const double ends = f(0.0) + f(upper);
  double odd = 0.0, even = 0.0;
  for (std::size_t i = 1; i < n; ++i) (i % 2 ? odd : even) += f(static_cast<double>(i) * h);
  double estimate = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);

  while (true) {
    if (2 * n > kMaxPanels)
      throw NumericalError("req_exact: Simpson quadrature did not converge to " +
                           std::to_string(abs_tol) + " with " + std::to_string(n) +
                           " panels on [0, " + std::to_string(upper) + "], last estimate " +
                           std::to_string(estimate) + ", detuning " + std::to_string(delta));
    even += odd;
    odd = 0.0;
    n *= 2;
    h *= 0.5;
    for (std::size_t i = 1; i < n; i += 2) odd += f(static_cast<double>(i) * h);
    const double next = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
    const double change = std::abs(next - estimate);
    estimate = next;
    if (change < abs_tol) break;
  }
  return {estimate, upper, n};
}

double req_exact(const KernelQuery& q, double abs_tol) {
  return req_exact_detailed(q, abs_tol).value;
}

double req_shorttime(const KernelQuery& q) {
  require_positive_theta(q.theta);
  if (q.t < 0.0 || std::isinf(q.t)) throw ParameterError("req_shorttime: t must be finite and >= 0");
  const double delta = q.detuning();
  const double t = q.t;
  return t - (delta * delta + q.sigma * q.sigma / q.theta) * t * t * t / 6.0;
}

double req_longtime_detuned(double detuning, double sigma, double theta) {
  require_positive_sigma(sigma, "req_longtime");
  require_positive_theta(theta);
  const double s2 = sigma * sigma;
  const double th2 = theta * theta;
  return s2 * th2 / (s2 * s2 + detuning * detuning * th2 * th2);
}

double req_longtime(const KernelQuery& q) {
  return req_longtime_detuned(q.detuning(), q.sigma, q.theta);
}

double req_longtime_avg(double W, double beta, double sigma, double theta) {
  require_positive_sigma(sigma, "req_longtime_avg");
  require_positive_theta(theta);
  const double s2 = sigma * sigma;
  const double th2 = theta * theta;
  return s2 * th2 / (s2 * s2 + 2.0 * W * W * th2 * th2 * sin2_pi_beta(beta));
}

double req_strong_noise(double sigma, double theta) {
  require_positive_sigma(sigma, "req_strong_noise");
  require_positive_theta(theta);
  return std::sqrt(std::numbers::pi * theta / 2.0) / sigma;
}

double sigma_max(double W, double theta, double beta) {
  if (!(W > 0.0)) throw ParameterError("sigma_max: W must be > 0");
  require_positive_theta(theta);
  return std::pow(2.0 * W * W * std::pow(theta, 4) * sin2_pi_beta(beta), 0.25);
}

}  // namespace qpskin
