#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "qpskin/dynamics.hpp"
#include "qpskin/model.hpp"

namespace qpskin {

struct MeanSpread {
  double X = 0.0;      // sum_j j p_j, sites labelled 1..L
  double Sigma = 0.0;  // sqrt(sum_j j^2 p_j - X^2)
};

// Requires a unit-norm state (|sum p - 1| <= 1e-6). With orbitals = 2 the
// position label is the unit cell, shared by both orbitals.
MeanSpread mean_and_spread(const CVector& psi, std::size_t orbitals = 1);

// Same moments for non-negative weights, normalized by their sum.
MeanSpread weighted_moments(std::span<const double> weights, std::size_t orbitals = 1);

struct ObservableSeries {
  std::vector<double> times;
  std::vector<double> X;
  std::vector<double> dX;      // X(t) - X(0)
  std::vector<double> Sigma;
  std::vector<double> Sigma2;  // mean of Sigma^2 (differs from Sigma^2 after averaging)
  std::vector<double> Ptot;
  std::vector<double> X_stderr;  // standard error of the ensemble mean, 0 for one series
  std::size_t ensemble_size = 1;
  std::optional<double> tau_relax;

  std::size_t size() const noexcept { return times.size(); }
  // Appends one grid point; dX is taken relative to the first X appended.
  void push(double t, const MeanSpread& m, double ptot);
};

ObservableSeries observe(const Trajectory& trajectory, std::size_t orbitals = 1);

ObservableSeries ensemble_average(std::span<const ObservableSeries> series);

// First t with X(t) >= fraction * L, linearly interpolated; nullopt if X never
// gets there.
std::optional<double> relaxation_time(const ObservableSeries& series, std::size_t L,
                                      double threshold_fraction = 0.8);

struct DriftDiffusionFit {
  double v = 0.0;
  double D = 0.0;
  double t_begin = 0.0;
  double t_end = 0.0;
  std::size_t points = 0;
};

// Least-squares v = dX/dt and D = (1/2) d<Sigma^2>/dt over the window where the
// travelled fraction (X - X(0)) / (L - X(0)) runs from lo to hi.
DriftDiffusionFit fit_drift_diffusion(const ObservableSeries& series, std::size_t L,
                                      double lo = 0.2, double hi = 0.7);

// Slope of log y against log t over t in [t_lo, t_hi].
double fit_scaling_exponent(std::span<const double> times, std::span<const double> values,
                            double t_lo, double t_hi);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
LineFit least_squares_line(std::span<const double> x, std::span<const double> y);

}  // namespace qpskin
