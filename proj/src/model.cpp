#include "qpskin/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qpskin/errors.hpp"

namespace qpskin {

void LatticeModel::validate() const {
  if (L < 2) throw ParameterError("lattice needs L >= 2 sites");
  if (!(a > 0.0)) throw ParameterError("lattice constant a must be > 0");
  if (!std::isfinite(J) || !std::isfinite(Delta) || !std::isfinite(W) || !std::isfinite(beta))
    throw ParameterError("lattice parameters must be finite");
}

double LatticeModel::onsite(std::size_t site) const {
  return W * std::cos(2.0 * std::numbers::pi * beta * static_cast<double>(site));
}

void GainLossModel::validate() const {
  if (N < 1) throw ParameterError("gain/loss chain needs N >= 1 unit cells");
  if (boundary == Boundary::PBC && N < 2)
    throw ParameterError("periodic gain/loss chain needs N >= 2 unit cells");
}

double GainLossModel::onsite(std::size_t cell) const {
  return W * std::cos(2.0 * std::numbers::pi * beta * static_cast<double>(cell));
}

CMatrix build_aah(const LatticeModel& model) {
  model.validate();
  const auto L = static_cast<Eigen::Index>(model.L);
  const cplx right = model.J + model.Delta;  // j -> j+1
  const cplx left = model.J - model.Delta;   // j+1 -> j
  CMatrix h = CMatrix::Zero(L, L);
  for (Eigen::Index r = 0; r < L; ++r) {
    h(r, r) = model.onsite(static_cast<std::size_t>(r) + 1);
    if (r + 1 < L) {
      h(r + 1, r) = right;
      h(r, r + 1) = left;
    }
  }
  if (model.boundary == Boundary::PBC) {
    // L == 2 would double-count the single bond.
    if (L > 2) {
      h(0, L - 1) += right;
      h(L - 1, 0) += left;
    }
  }
  return h;
}

CMatrix build_gainloss(const GainLossModel& model) {
  model.validate();
  const auto N = static_cast<Eigen::Index>(model.N);
  CMatrix h = CMatrix::Zero(2 * N, 2 * N);
  const cplx i{0.0, 1.0};
  auto a = [](Eigen::Index cell) { return 2 * cell; };
  auto b = [](Eigen::Index cell) { return 2 * cell + 1; };

  // Adds amp c^dag_row c_col + H.c.
  auto hop = [&h](Eigen::Index row, Eigen::Index col, cplx amp) {
    h(row, col) += amp;
    h(col, row) += std::conj(amp);
  };

  for (Eigen::Index n = 0; n < N; ++n) {
    hop(a(n), b(n), model.t1);
    const double eps = model.onsite(static_cast<std::size_t>(n) + 1);
    h(a(n), a(n)) += eps - i * model.Gamma;
    h(b(n), b(n)) += eps + i * model.Gamma;
  }
  const Eigen::Index bonds = model.boundary == Boundary::PBC ? N : N - 1;
  for (Eigen::Index n = 0; n < bonds; ++n) {
    const Eigen::Index m = (n + 1) % N;
    hop(b(n), a(m), model.t2);
    hop(a(n), a(m), i * model.t3);
    hop(b(n), b(m), i * model.t3);
  }
  return h;
}

double critical_strength(double J, double Delta) {
  return 2.0 * std::max(std::abs(J + Delta), std::abs(J - Delta));
}

}  // namespace qpskin
