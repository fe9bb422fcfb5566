#pragma once

// Transport kernel Re Q_{j,j+1} of the OU-averaged dynamics.
//
// Re Q(t) = int_0^t cos(delta s) exp(-Var(s)) ds, with delta = eps_j - eps_{j+1}
// the bond detuning and Var the accumulated OU phase variance.  Closed forms
// cover the short-time, stationary, spatially averaged and strong-noise
// regimes; req_exact is the quadrature oracle for all of them.

#include <cstddef>
#include <limits>

namespace qpskin {

struct KernelQuery {
  static constexpr double stationary = std::numeric_limits<double>::infinity();

  std::size_t j = 50;  // bond (j, j+1), 1-based
  double W = 0.0;
  double beta = 0.0;
  double sigma = 0.0;
  double theta = 1.0;
  double t = stationary;

  // eps_j - eps_{j+1} = 2 W sin(pi beta (2j+1)) sin(pi beta)
  double detuning() const;
  // The same query for bond (j-1, j), which carries Re Q_{j,j-1}.
  KernelQuery left_bond() const;
};

// Var(dt) = (sigma^2/theta^2) [dt - (1 - e^{-theta dt})/theta]
double phase_variance(double dt, double sigma, double theta);

struct QuadratureInfo {
  double value = 0.0;
  double upper_limit = 0.0;
  std::size_t panels = 0;
};

// Composite Simpson with panel doubling until successive estimates change by
// less than abs_tol.  t = stationary integrates up to where exp(-Var) < 1e-12.
double req_exact(const KernelQuery& q, double abs_tol = 1e-8);
QuadratureInfo req_exact_detailed(const KernelQuery& q, double abs_tol = 1e-8);

// t - (1/6)[delta^2 + sigma^2/theta] t^3
double req_shorttime(const KernelQuery& q);

// sigma^2 theta^2 / (sigma^4 + delta^2 theta^4); sigma > 0.
double req_longtime(const KernelQuery& q);

// Stationary kernel for an explicit detuning (used for the periodic wrap bond,
// where the product form does not apply).
double req_longtime_detuned(double detuning, double sigma, double theta);

// sigma^2 theta^2 / (sigma^4 + 2 W^2 theta^4 sin^2(pi beta)); sigma > 0.
double req_longtime_avg(double W, double beta, double sigma, double theta);

// sqrt(pi theta / 2) / sigma, the large-sigma asymptote.
double req_strong_noise(double sigma, double theta);

// (2 W^2 theta^4 sin^2(pi beta))^{1/4}, argmax of req_longtime_avg in sigma.
double sigma_max(double W, double theta, double beta);

}  // namespace qpskin
