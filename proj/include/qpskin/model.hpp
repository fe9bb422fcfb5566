#pragma once

// Static lattice Hamiltonians.
//
// Hopping convention (single source of truth for the whole library): the
// amplitude for a hop from site j to site j+1 is J+Delta and from j+1 to j is
// J-Delta, i.e. H[j+1][j] = J+Delta and H[j][j+1] = J-Delta.  With Delta > 0
// wave packets drift towards larger j and OBC eigenstates pile up at the right
// edge.
//
// Site labels are 1-based in the physics (on-site energy W cos(2 pi beta j)
// for j = 1..L, positions X = sum_j j |A_j|^2); matrix rows are 0-based, so
// row r holds site r + 1.

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace qpskin {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

enum class Boundary { OBC, PBC };

inline constexpr double golden_beta = 0.61803398874989484820;  // (sqrt5 - 1)/2

struct LatticeModel {
  double J = 1.5;
  double Delta = 0.5;
  double W = 0.0;
  double beta = golden_beta;
  std::size_t L = 100;
  double a = 1.0;
  Boundary boundary = Boundary::OBC;

  void validate() const;
  // W cos(2 pi beta site), site 1-based.
  double onsite(std::size_t site) const;
};

// Two-band chain with intra-cell t1, inter-cell t2, next-cell i t3 on both
// sublattices and -i Gamma / +i Gamma on the a / b sublattice.  Basis order is
// (1,a), (1,b), (2,a), (2,b), ..., so cell n (1-based) occupies rows 2(n-1)
// and 2(n-1)+1.
struct GainLossModel {
  cplx t1{0.0, 1.0};
  cplx t2{0.0, 2.0};
  cplx t3{0.2, 0.0};
  double Gamma = 3.5;
  double W = 0.0;
  double beta = golden_beta;
  std::size_t N = 40;
  Boundary boundary = Boundary::OBC;

  void validate() const;
  std::size_t dimension() const { return 2 * N; }
  double onsite(std::size_t cell) const;
};

CMatrix build_aah(const LatticeModel& model);
CMatrix build_gainloss(const GainLossModel& model);

// W_c = 2 max(|J+Delta|, |J-Delta|)
double critical_strength(double J, double Delta);

}  // namespace qpskin
