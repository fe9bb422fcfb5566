#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qpskin/model.hpp"

namespace qpskin {

struct SpectralResult {
  std::vector<cplx> eigenvalues;
  CMatrix vectors;              // column n is the unit-norm right eigenvector of eigenvalue n
  std::vector<double> weights;  // skin-corner weight per state (spectrum_with_weights only)
  double max_residual = 0.0;    // max_n |H v_n - E_n v_n| / |H|
};

// Diagonal similarity D^{-1} A D that minimizes the off-diagonal Frobenius
// norm (row and column 2-norms equal), with D rounded to powers of two.
// Returns the diagonal of D.
std::vector<double> balance(CMatrix& a);

// Dense non-symmetric eigendecomposition: balancing, then Eigen's complex
// Schur-based solver.  Throws NumericalError on non-convergence or when a
// residual exceeds 1e-8 |H|.
SpectralResult eig(const CMatrix& h, bool compute_vectors = true);

// sum_r |psi(r)|^4 [exp(-|r - r2|/lambda) - exp(-|r - r1|/lambda)], r = cell
// index (1-based) shared by `orbitals` consecutive rows.
double skin_corner_weight(const CVector& psi, std::size_t r1, std::size_t r2, double lambda,
                          std::size_t orbitals = 1);

SpectralResult spectrum_with_weights(const CMatrix& h, std::size_t r1, std::size_t r2,
                                     double lambda, std::size_t orbitals = 1);

struct BottResult {
  cplx energy;
  double value = 0.0;
  double min_singular_value = 0.0;
  bool ill_conditioned = false;  // E_a numerically on the spectrum
};

// First-order Bott index P_x(E_a) from the SVD of H - E_a.  The dipole
// operator uses the cell coordinate x = r / orbitals + 1 and period L_x.
BottResult bott_index(const CMatrix& h, cplx energy, std::size_t Lx, std::size_t orbitals = 1);

// Bloch dispersion of the clean chain under the library hopping convention:
// E(k) = (J+Delta) e^{-ik} + (J-Delta) e^{ik}.
cplx bloch_energy(const LatticeModel& model, double k);

// Winding of E(k) - E_a as k runs down from 2 pi to 0.  This orientation
// makes the result equal bott_index on the periodic chain (+1 at E_a = 0 for
// J Delta > 0).  Requires W = 0; throws NumericalError when E_a lies on the
// Bloch curve.
int winding_number(const LatticeModel& model, cplx energy, std::size_t k_points = 4096);

// Signed area enclosed by the closed polygon through `points` (shoelace).
double polygon_area(std::span<const cplx> points);

// Total phase of (z - ref) around the closed polygon, divided by 2 pi.
double curve_winding(std::span<const cplx> points, cplx ref);

}  // namespace qpskin
