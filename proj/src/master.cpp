#include "qpskin/master.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/LU>

#include "qpskin/banded.hpp"
#include "qpskin/dynamics.hpp"
#include "qpskin/errors.hpp"
#include "qpskin/kernel.hpp"
#include "qpskin/spectral.hpp"

namespace qpskin {

namespace {

double wrap_phase(double d) {
  while (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  while (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

double det_phase(const CMatrix& a) {
  Eigen::PartialPivLU<CMatrix> lu(a);
  const CMatrix& u = lu.matrixLU();
  double phase = lu.permutationP().determinant() < 0 ? std::numbers::pi : 0.0;
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    if (u(i, i) == cplx(0.0)) throw NumericalError("flux_winding: reference point is an eigenvalue");
    phase += std::arg(u(i, i));
  }
  return phase;
}

}  // namespace

const char* to_string(KernelMode mode) {
  return mode == KernelMode::Averaged ? "averaged" : "site_resolved";
}

KernelMode kernel_mode_from_string(const std::string& name) {
  if (name == "averaged") return KernelMode::Averaged;
  if (name == "site_resolved") return KernelMode::SiteResolved;
  throw ParameterError("unknown kernel mode '" + name + "' (expected averaged or site_resolved)");
}

TransportCoefficients transport_coefficients(double R, double J, double Delta, double a) {
  if (R < 0.0) throw ParameterError("transport_coefficients: kernel must be >= 0");
  return {8.0 * R * Delta * Delta, 8.0 * R * J * Delta * a, 2.0 * R * (J * J + Delta * Delta) * a * a};
}

MasterOperator build_master(const LatticeModel& model, double sigma, double theta,
                            KernelMode mode) {
  model.validate();
  if (!(sigma > 0.0)) throw ParameterError("build_master: sigma must be > 0");
  const std::size_t L = model.L;
  const double J = model.J, D = model.Delta;
  const double gain_left = (J + D) * (J + D);   // from j-1 into j
  const double gain_right = (J - D) * (J - D);  // from j+1 into j
  const double loss = D * D - J * J;

  MasterOperator op;
  op.mode = mode;
  op.boundary = model.boundary;
  op.J = J;
  op.Delta = D;
  op.R_avg = req_longtime_avg(model.W, model.beta, sigma, theta);

  // bond b (0-based) joins rows b and b+1; the wrap bond joins rows L-1 and 0.
  const bool periodic = model.boundary == Boundary::PBC && L > 2;
  const std::size_t bonds = periodic ? L : L - 1;
  std::vector<double> kernel(bonds);
  for (std::size_t b = 0; b < bonds; ++b) {
    if (mode == KernelMode::Averaged) {
      kernel[b] = op.R_avg;
    } else if (b + 1 < L) {
      KernelQuery q{b + 1, model.W, model.beta, sigma, theta, KernelQuery::stationary};
      kernel[b] = req_longtime(q);
    } else {
      kernel[b] = req_longtime_detuned(model.onsite(L) - model.onsite(1), sigma, theta);
    }
  }

  const auto n = static_cast<Eigen::Index>(L);
  op.M = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t b = 0; b < bonds; ++b) {
    const auto left = static_cast<Eigen::Index>(b);
    const auto right = static_cast<Eigen::Index>((b + 1) % L);
    const double k = kernel[b];
    op.M(right, left) += 2.0 * k * gain_left;
    op.M(left, right) += 2.0 * k * gain_right;
    op.M(left, left) += 2.0 * k * loss;
    op.M(right, right) += 2.0 * k * loss;
  }
  return op;
}

cplx circulant_eigenvalue(double R, double J, double Delta, double k) {
  return 2.0 * R *
         (2.0 * (Delta * Delta - J * J) + (J + Delta) * (J + Delta) * std::polar(1.0, -k) +
          (J - Delta) * (J - Delta) * std::polar(1.0, k));
}

double flux_winding(const Eigen::MatrixXd& M, cplx ref, std::size_t phi_points) {
  return flux_winding(CMatrix(M.cast<cplx>()), ref, phi_points);
}

double flux_winding(const CMatrix& M, cplx ref, std::size_t phi_points) {
  const Eigen::Index n = M.rows();
  if (n < 3 || (M(0, n - 1) == cplx(0.0) && M(n - 1, 0) == cplx(0.0))) return 0.0;
  const CMatrix base = M - ref * CMatrix::Identity(n, n);
  auto shifted = [&](double phi) {
    CMatrix a = base;
    a(0, n - 1) *= std::polar(1.0, phi);
    a(n - 1, 0) *= std::polar(1.0, -phi);
    return a;
  };
  for (std::size_t points = std::max<std::size_t>(phi_points, 8); points <= (1u << 16); points *= 2) {
    double total = 0.0, prev = det_phase(shifted(0.0));
    bool smooth = true;
    for (std::size_t i = 1; i <= points; ++i) {
      const double phi = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(points);
      const double cur = det_phase(shifted(phi));
      const double d = wrap_phase(cur - prev);
      if (std::abs(d) > 1.0) {
        smooth = false;
        break;
      }
      total += d;
      prev = cur;
    }
    if (smooth) return total / (2.0 * std::numbers::pi);
  }
  throw NumericalError("flux_winding: determinant phase not resolved with 65536 flux points");
}

MasterSpectrum master_spectrum(const MasterOperator& op, std::optional<cplx> reference) {
  const std::size_t L = op.size();
  const auto dense = eig(op.M.cast<cplx>(), false).eigenvalues;

  MasterSpectrum out;
  cplx centroid = 0.0;
  for (const auto& e : dense) centroid += e;
  centroid /= static_cast<double>(L);
  out.reference = reference.value_or(centroid);

  const bool circulant = op.mode == KernelMode::Averaged && op.boundary == Boundary::PBC && L > 2;
  if (circulant) {
    // Greedy nearest matching of dense eigenvalues to lambda(k), k running
    // downwards from 0 (the library winding orientation).
    std::vector<bool> used(L, false);
    out.closed_form_deviation = 0.0;
    for (std::size_t m = 0; m < L; ++m) {
      const double k = 2.0 * std::numbers::pi * static_cast<double>((L - m) % L) / static_cast<double>(L);
      const cplx target = circulant_eigenvalue(op.R_avg, op.J, op.Delta, k);
      std::size_t best = L;
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < L; ++i) {
        if (used[i]) continue;
        const double dist = std::abs(dense[i] - target);
        if (dist < best_dist) {
          best_dist = dist;
          best = i;
        }
      }
      used[best] = true;
      out.eigenvalues.push_back(dense[best]);
      out.k.push_back(k);
      out.closed_form_deviation = std::max(out.closed_form_deviation, best_dist);
    }
    out.ordering = "k";
    out.winding_method = "curve";
    out.winding = curve_winding(out.eigenvalues, out.reference);
  } else {
    out.eigenvalues = dense;
    const cplx ref = out.reference;
    std::sort(out.eigenvalues.begin(), out.eigenvalues.end(), [&](cplx a, cplx b) {
      return std::arg(a - ref) < std::arg(b - ref);
    });
    out.ordering = "angle";
    out.winding_method = "flux";
    out.winding = flux_winding(op.M, out.reference);
  }
  out.signed_area = polygon_area(out.eigenvalues);
  out.area = std::abs(out.signed_area);
  return out;
}

MasterEvolution evolve_master(const MasterOperator& op, std::span<const double> p0, double dt,
                              double t_final, std::size_t output_stride) {
  const std::size_t L = op.size();
  if (p0.size() != L)
    throw ParameterError("evolve_master: initial vector has " + std::to_string(p0.size()) +
                         " entries, generator has " + std::to_string(L));
  for (double p : p0)
    if (!(p >= 0.0)) throw ParameterError("evolve_master: initial probabilities must be >= 0");
  const std::size_t n_steps = step_count(dt, t_final);
  const auto outputs = strided_outputs(n_steps, output_stride);

  const BandedMatrix<double> gen(op.M);
  std::vector<double> p(p0.begin(), p0.end()), k1(L), k2(L), k3(L), k4(L), tmp(L);
  double log_scale = 0.0;
  MasterEvolution out;

  auto emit = [&](std::size_t step) {
    double total = 0.0;
    for (double x : p) total += x;
    if (!std::isfinite(total) || !(total > 0.0))
      throw IntegrationError("master evolution: total probability became non-finite or vanished", step);
    std::vector<double> profile(L);
    for (std::size_t j = 0; j < L; ++j) profile[j] = p[j] / total;
    out.series.push(static_cast<double>(step) * dt, weighted_moments(profile),
                    std::exp(std::log(total) + log_scale));
    out.profiles.push_back(std::move(profile));
  };

  std::size_t next_out = 0;
  for (std::size_t step = 0;; ++step) {
    if (next_out < outputs.size() && outputs[next_out] == step) {
      emit(step);
      ++next_out;
    }
    if (step == n_steps) break;
    gen.apply(p, k1);
    for (std::size_t j = 0; j < L; ++j) tmp[j] = p[j] + 0.5 * dt * k1[j];
    gen.apply(tmp, k2);
    for (std::size_t j = 0; j < L; ++j) tmp[j] = p[j] + 0.5 * dt * k2[j];
    gen.apply(tmp, k3);
    for (std::size_t j = 0; j < L; ++j) tmp[j] = p[j] + dt * k3[j];
    gen.apply(tmp, k4);
    for (std::size_t j = 0; j < L; ++j) p[j] += dt / 6.0 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j]);
    if ((step + 1) % 16 == 0) {
      double total = 0.0;
      for (double x : p) total += x;
      if (!std::isfinite(total)) throw IntegrationError("master evolution became non-finite", step + 1);
      if (total > 1e200 || (total < 1e-200 && total > 0.0)) {
        for (double& x : p) x /= total;
        log_scale += std::log(total);
      }
    }
  }
  return out;
}

double continuum_density(double S, double v, double D, double x, double t) {
  if (!(t > 0.0)) throw ParameterError("continuum_density: t must be > 0");
  if (!(D > 0.0)) throw ParameterError("continuum_density: D must be > 0");
  const double u = x - v * t;
  return std::exp(S * t - u * u / (4.0 * D * t)) / std::sqrt(4.0 * std::numbers::pi * D * t);
}

BallisticMoments shorttime_moments(double J, double Delta, double a, double t) {
  if (t < 0.0) throw ParameterError("shorttime_moments: t must be >= 0");
  return {4.0 * J * Delta * a * t * t, std::sqrt(2.0 * (J * J + Delta * Delta)) * a * t};
}

}  // namespace qpskin
