#include "qpskin/observables.hpp"

#include <algorithm>
#include <cmath>

#include "qpskin/errors.hpp"

namespace qpskin {

MeanSpread weighted_moments(std::span<const double> weights, std::size_t orbitals) {
  if (orbitals == 0) throw ParameterError("orbitals must be >= 1");
  double total = 0.0, first = 0.0, second = 0.0;
  for (std::size_t r = 0; r < weights.size(); ++r) {
    const double pos = static_cast<double>(r / orbitals + 1);
    total += weights[r];
    first += pos * weights[r];
    second += pos * pos * weights[r];
  }
  if (!(total > 0.0)) throw ContractViolation("weighted_moments: total weight must be > 0");
  MeanSpread m;
  m.X = first / total;
  m.Sigma = std::sqrt(std::max(0.0, second / total - m.X * m.X));
  return m;
}

MeanSpread mean_and_spread(const CVector& psi, std::size_t orbitals) {
  std::vector<double> p(static_cast<std::size_t>(psi.size()));
  double total = 0.0;
  for (Eigen::Index r = 0; r < psi.size(); ++r) {
    p[static_cast<std::size_t>(r)] = std::norm(psi(r));
    total += p[static_cast<std::size_t>(r)];
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw ContractViolation("mean_and_spread: state is not normalized (sum p = " +
                            std::to_string(total) + ")");
  return weighted_moments(p, orbitals);
}

void ObservableSeries::push(double t, const MeanSpread& m, double ptot) {
  times.push_back(t);
  X.push_back(m.X);
  dX.push_back(m.X - X.front());
  Sigma.push_back(m.Sigma);
  Sigma2.push_back(m.Sigma * m.Sigma);
  Ptot.push_back(ptot);
  X_stderr.push_back(0.0);
}

ObservableSeries observe(const Trajectory& trajectory, std::size_t orbitals) {
  ObservableSeries s;
  for (std::size_t i = 0; i < trajectory.times.size(); ++i)
    s.push(trajectory.times[i], mean_and_spread(trajectory.amplitudes[i], orbitals),
           trajectory.raw_norms[i]);
  return s;
}

ObservableSeries ensemble_average(std::span<const ObservableSeries> series) {
  if (series.empty()) throw ParameterError("ensemble_average: no series given");
  const auto& ref = series.front();
  const std::size_t n = ref.size();
  for (const auto& s : series) {
    if (s.size() != n) throw ParameterError("ensemble_average: time grids differ in length");
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(s.times[i] - ref.times[i]) > 1e-9 * std::max(1.0, std::abs(ref.times[i])))
        throw ParameterError("ensemble_average: time grids differ");
  }

  const double m = static_cast<double>(series.size());
  ObservableSeries out;
  out.times = ref.times;
  out.X.assign(n, 0.0);
  out.dX.assign(n, 0.0);
  out.Sigma.assign(n, 0.0);
  out.Sigma2.assign(n, 0.0);
  out.Ptot.assign(n, 0.0);
  out.X_stderr.assign(n, 0.0);
  std::size_t members = 0;
  for (const auto& s : series) {
    members += s.ensemble_size;
    for (std::size_t i = 0; i < n; ++i) {
      out.X[i] += s.X[i] / m;
      out.dX[i] += s.dX[i] / m;
      out.Sigma[i] += s.Sigma[i] / m;
      out.Sigma2[i] += s.Sigma2[i] / m;
      out.Ptot[i] += s.Ptot[i] / m;
    }
  }
  if (series.size() > 1) {
    for (std::size_t i = 0; i < n; ++i) {
      double var = 0.0;
      for (const auto& s : series) var += (s.X[i] - out.X[i]) * (s.X[i] - out.X[i]);
      var /= (m - 1.0);
      out.X_stderr[i] = std::sqrt(var / m);
    }
  }
  out.ensemble_size = members;
  return out;
}

std::optional<double> relaxation_time(const ObservableSeries& series, std::size_t L,
                                      double threshold_fraction) {
  const double target = threshold_fraction * static_cast<double>(L);
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series.X[i] >= target) {
      if (i == 0) return series.times[0];
      const double x0 = series.X[i - 1], x1 = series.X[i];
      const double t0 = series.times[i - 1], t1 = series.times[i];
      return t0 + (target - x0) / (x1 - x0) * (t1 - t0);
    }
  }
  return std::nullopt;
}

LineFit least_squares_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw FitError("line fit needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw FitError("line fit: abscissae are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

DriftDiffusionFit fit_drift_diffusion(const ObservableSeries& series, std::size_t L,
                                      double lo, double hi) {
  if (series.size() == 0) throw FitError("drift/diffusion fit: empty series");
  const double x0 = series.X.front();
  const double distance = static_cast<double>(L) - x0;
  if (!(distance > 0.0)) throw FitError("drift/diffusion fit: start already at the right edge");

  std::optional<std::size_t> begin, end;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double fraction = (series.X[i] - x0) / distance;
    if (!begin && fraction >= lo) begin = i;
    if (begin && fraction >= hi) {
      end = i;
      break;
    }
  }
  if (!begin || !end || *end - *begin + 1 < 3)
    throw FitError("drift/diffusion fit: travelled-fraction window [" + std::to_string(lo) +
                   ", " + std::to_string(hi) + "] is empty or too short");

  const std::size_t b = *begin, e = *end + 1;
  std::span<const double> t(series.times.data() + b, e - b);
  const auto vx = least_squares_line(t, std::span<const double>(series.X.data() + b, e - b));
  const auto vs = least_squares_line(t, std::span<const double>(series.Sigma2.data() + b, e - b));
  DriftDiffusionFit fit;
  fit.v = vx.slope;
  fit.D = 0.5 * vs.slope;
  fit.t_begin = series.times[b];
  fit.t_end = series.times[e - 1];
  fit.points = e - b;
  return fit;
}

double fit_scaling_exponent(std::span<const double> times, std::span<const double> values,
                            double t_lo, double t_hi) {
  if (times.size() != values.size()) throw FitError("scaling fit: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t_lo || times[i] > t_hi) continue;
    if (!(values[i] > 0.0) || !(times[i] > 0.0))
      throw FitError("scaling fit: non-positive value at t = " + std::to_string(times[i]));
    lx.push_back(std::log(times[i]));
    ly.push_back(std::log(values[i]));
  }
  if (lx.size() < 10)
    throw FitError("scaling fit: only " + std::to_string(lx.size()) +
                   " points in window (need >= 10)");
  return least_squares_line(lx, ly).slope;
}

}  // namespace qpskin
