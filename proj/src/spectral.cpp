#include "qpskin/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "qpskin/errors.hpp"

namespace qpskin {

namespace {

constexpr double kResidualBound = 1e-8;
constexpr double kRefineThreshold = 1e-12;

double wrap_phase(double d) {
  while (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  while (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

}  // namespace

std::vector<double> balance(CMatrix& a) {
  const Eigen::Index n = a.rows();
  std::vector<double> scale(static_cast<std::size_t>(n), 1.0);
  if (n < 2) return scale;

  // Minimize f(u) = sum_{i != k} |a_ik|^2 e^{2(u_k - u_i)} by damped Newton.
  // The gradient is 2(col_norm^2 - row_norm^2) and the Hessian a weighted
  // graph Laplacian, so the minimizer is the Osborne fixed point.  Osborne's
  // sweeps (and the 1-norm radix-2 variant) stall on chains whose optimal
  // scaling grows geometrically along the chain, e.g. open Hatano-Nelson.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> nz;
  std::vector<double> w;
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != k && a(i, k) != cplx(0.0)) {
        nz.emplace_back(i, k);
        w.push_back(std::norm(a(i, k)));
      }
  if (nz.empty()) return scale;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  auto objective = [&](const Eigen::VectorXd& x) {
    double f = 0.0;
    for (std::size_t e = 0; e < nz.size(); ++e)
      f += w[e] * std::exp(2.0 * (x(nz[e].second) - x(nz[e].first)));
    return f;
  };

  Eigen::MatrixXd hess(n, n);
  Eigen::VectorXd row(n), col(n), grad(n);
  double f = objective(u);
  for (int iter = 0; iter < 200; ++iter) {
    hess.setZero();
    row.setZero();
    col.setZero();
    for (std::size_t e = 0; e < nz.size(); ++e) {
      const auto [i, k] = nz[e];
      const double b = w[e] * std::exp(2.0 * (u(k) - u(i)));
      row(i) += b;
      col(k) += b;
      hess(i, k) -= 4.0 * b;
      hess(k, i) -= 4.0 * b;
    }
    double imbalance = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (row(i) + col(i) > 0.0) imbalance = std::max(imbalance, std::abs(col(i) - row(i)) / (col(i) + row(i)));
    if (imbalance < 1e-6) break;
    grad = 2.0 * (col - row);
    hess.diagonal() = 4.0 * (row + col);
    hess.diagonal().array() += 1e-12 * hess.diagonal().maxCoeff() + 1e-300;
    const Eigen::VectorXd step = -hess.ldlt().solve(grad);
    const double slope = grad.dot(step);
    if (!(slope < 0.0)) break;
    double alpha = 1.0;
    Eigen::VectorXd trial = u + step;
    double ft = objective(trial);
    while (!(ft <= f + 1e-4 * alpha * slope) && alpha > 1e-12) {
      alpha *= 0.5;
      trial = u + alpha * step;
      ft = objective(trial);
    }
    if (alpha <= 1e-12) break;
    u = trial;
    f = ft;
  }

  // Power-of-two scales keep the similarity exact in floating point.
  for (Eigen::Index i = 0; i < n; ++i)
    scale[static_cast<std::size_t>(i)] = std::ldexp(1.0, static_cast<int>(std::lround(u(i) / std::numbers::ln2)));
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      a(i, k) *= scale[static_cast<std::size_t>(k)] / scale[static_cast<std::size_t>(i)];
  return scale;
}

SpectralResult eig(const CMatrix& h, bool compute_vectors) {
  if (h.rows() != h.cols()) throw ParameterError("eig: matrix must be square");
  if (h.rows() == 0) return {};
  CMatrix balanced = h;
  const auto scale = balance(balanced);

  Eigen::ComplexEigenSolver<CMatrix> solver(balanced, compute_vectors);
  if (solver.info() != Eigen::Success)
    throw NumericalError("eig: complex Schur iteration did not converge (dimension " +
                         std::to_string(h.rows()) + ")");

  SpectralResult out;
  const Eigen::Index n = h.rows();
  out.eigenvalues.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.eigenvalues[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
  if (!compute_vectors) return out;

  out.vectors = solver.eigenvectors();
  for (Eigen::Index r = 0; r < n; ++r) out.vectors.row(r) *= scale[static_cast<std::size_t>(r)];
  const double hnorm = std::max(h.norm(), 1e-300);
  auto residual = [&](const CVector& v, cplx e) { return (h * v - e * v).norm() / hnorm; };
  for (Eigen::Index c = 0; c < n; ++c) {
    out.vectors.col(c).normalize();
    const cplx e = out.eigenvalues[static_cast<std::size_t>(c)];
    double res = residual(out.vectors.col(c), e);
    // Back-scaling by a strongly graded D amplifies roundoff in the small
    // components; inverse iteration on the unbalanced matrix repairs them.
    if (res > kRefineThreshold) {
      const cplx shift = e + cplx(1.0, 1.0) * (16.0 * std::numeric_limits<double>::epsilon() * hnorm);
      Eigen::PartialPivLU<CMatrix> lu(h - shift * CMatrix::Identity(n, n));
      CVector v = out.vectors.col(c);
      for (int it = 0; it < 3 && res > kRefineThreshold; ++it) {
        CVector x = lu.solve(v);
        const double xn = x.norm();
        if (!std::isfinite(xn) || xn == 0.0) break;
        x /= xn;
        const double r = residual(x, e);
        if (!(r < res)) break;
        v = x;
        res = r;
      }
      out.vectors.col(c) = v;
    }
    out.max_residual = std::max(out.max_residual, res);
  }
  if (!(out.max_residual < kResidualBound)) {
    char msg[128];
    std::snprintf(msg, sizeof msg, "eig: eigenpair residual %.3e exceeds %.0e |H|", out.max_residual,
                  kResidualBound);
    throw NumericalError(msg);
  }
  return out;
}

double skin_corner_weight(const CVector& psi, std::size_t r1, std::size_t r2, double lambda,
                          std::size_t orbitals) {
  if (!(lambda > 0.0)) throw ParameterError("skin_corner_weight: lambda must be > 0");
  if (orbitals == 0) throw ParameterError("skin_corner_weight: orbitals must be >= 1");
  double w = 0.0;
  for (Eigen::Index i = 0; i < psi.size(); ++i) {
    const double r = static_cast<double>(static_cast<std::size_t>(i) / orbitals + 1);
    const double p = std::norm(psi(i));
    w += p * p *
         (std::exp(-std::abs(r - static_cast<double>(r2)) / lambda) -
          std::exp(-std::abs(r - static_cast<double>(r1)) / lambda));
  }
  return w;
}

SpectralResult spectrum_with_weights(const CMatrix& h, std::size_t r1, std::size_t r2,
                                     double lambda, std::size_t orbitals) {
  auto result = eig(h, true);
  result.weights.reserve(result.eigenvalues.size());
  for (Eigen::Index c = 0; c < result.vectors.cols(); ++c)
    result.weights.push_back(skin_corner_weight(result.vectors.col(c), r1, r2, lambda, orbitals));
  return result;
}

BottResult bott_index(const CMatrix& h, cplx energy, std::size_t Lx, std::size_t orbitals) {
  if (h.rows() != h.cols()) throw ParameterError("bott_index: matrix must be square");
  if (Lx == 0 || orbitals == 0) throw ParameterError("bott_index: Lx and orbitals must be >= 1");
  const Eigen::Index n = h.rows();
  CMatrix shifted = h - energy * CMatrix::Identity(n, n);
  Eigen::BDCSVD<CMatrix> svd(shifted, Eigen::ComputeFullU | Eigen::ComputeFullV);

  BottResult out;
  out.energy = energy;
  const auto& sv = svd.singularValues();
  out.min_singular_value = sv(n - 1);
  out.ill_conditioned = out.min_singular_value < 1e-10 * std::max(sv(0), 1e-300);

  CVector dipole(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = static_cast<double>(static_cast<std::size_t>(i) / orbitals + 1);
    dipole(i) = std::polar(1.0, 2.0 * std::numbers::pi * x / static_cast<double>(Lx));
  }
  const CMatrix& ua = svd.matrixU();
  const CMatrix& ub = svd.matrixV();
  const CMatrix pa = ua.adjoint() * dipole.asDiagonal() * ua;
  const CMatrix pb = ub.adjoint() * dipole.asDiagonal() * ub;
  Eigen::ComplexEigenSolver<CMatrix> solver(pa * pb.adjoint(), false);
  if (solver.info() != Eigen::Success)
    throw NumericalError("bott_index: eigenvalues of the projected dipole product did not converge");
  double phase = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) phase += std::arg(solver.eigenvalues()(i));
  out.value = phase / (2.0 * std::numbers::pi);
  return out;
}

cplx bloch_energy(const LatticeModel& model, double k) {
  return (model.J + model.Delta) * std::polar(1.0, -k) + (model.J - model.Delta) * std::polar(1.0, k);
}

int winding_number(const LatticeModel& model, cplx energy, std::size_t k_points) {
  if (model.W != 0.0) throw ParameterError("winding_number: requires W = 0 (Bloch-diagonalizable)");
  if (k_points < 8) throw ParameterError("winding_number: need at least 8 k points");
  std::vector<cplx> curve(k_points);
  double closest = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < k_points; ++m) {
    const double k = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(k_points);
    curve[m] = bloch_energy(model, k);
    closest = std::min(closest, std::abs(curve[m] - energy));
  }
  const double scale = std::abs(model.J) + std::abs(model.Delta);
  if (closest < 1e-9 * std::max(scale, 1.0))
    throw NumericalError("winding_number: reference energy lies on the Bloch curve");
  return -static_cast<int>(std::lround(curve_winding(curve, energy)));
}

double polygon_area(std::span<const cplx> points) {
  const std::size_t n = points.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const cplx a = points[i], b = points[(i + 1) % n];
    twice += a.real() * b.imag() - b.real() * a.imag();
  }
  return 0.5 * twice;
}

double curve_winding(std::span<const cplx> points, cplx ref) {
  const std::size_t n = points.size();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const cplx a = points[i] - ref, b = points[(i + 1) % n] - ref;
    total += wrap_phase(std::arg(b) - std::arg(a));
  }
  return total / (2.0 * std::numbers::pi);
}

}  // namespace qpskin
