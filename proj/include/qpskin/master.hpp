#pragma once

// Effective noise master equation d<P>/dt = M <P>.
//
// Orientation matches the Hamiltonian convention: site j receives
// 2 R (J+Delta)^2 <P_{j-1}> from the left and 2 R (J-Delta)^2 <P_{j+1}> from
// the right, so the drift is +v for J Delta > 0.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpskin/model.hpp"
#include "qpskin/observables.hpp"

namespace qpskin {

enum class KernelMode { SiteResolved, Averaged };

const char* to_string(KernelMode mode);
KernelMode kernel_mode_from_string(const std::string& name);

struct TransportCoefficients {
  double S = 0.0;  // growth rate
  double v = 0.0;  // drift velocity
  double D = 0.0;  // diffusion coefficient
};

// S = 8 R Delta^2, v = 8 R J Delta a, D = 2 R (J^2 + Delta^2) a^2
TransportCoefficients transport_coefficients(double R, double J, double Delta, double a = 1.0);

struct MasterOperator {
  Eigen::MatrixXd M;
  KernelMode mode = KernelMode::Averaged;
  Boundary boundary = Boundary::PBC;
  double J = 0.0;
  double Delta = 0.0;
  double R_avg = 0.0;  // req_longtime_avg at the build parameters

  std::size_t size() const { return static_cast<std::size_t>(M.rows()); }
};

// Kernels come from req_longtime (site-resolved: one per bond, with the
// periodic wrap bond using eps_L - eps_1) or req_longtime_avg (averaged).
MasterOperator build_master(const LatticeModel& model, double sigma, double theta,
                            KernelMode mode);

struct MasterSpectrum {
  std::vector<cplx> eigenvalues;  // in loop order
  std::vector<double> k;          // Bloch momentum per eigenvalue (averaged PBC, decreasing), else empty
  double signed_area = 0.0;       // shoelace area of the ordered loop
  double area = 0.0;              // |signed_area|
  double winding = 0.0;           // about `reference`
  cplx reference;
  double closed_form_deviation = -1.0;  // averaged PBC: max |dense - circulant|, else -1
  std::string ordering;           // "k" or "angle"
  std::string winding_method;     // "curve" or "flux"
};

// lambda(k) = 2R[2(Delta^2 - J^2) + (J+Delta)^2 e^{-ik} + (J-Delta)^2 e^{ik}]
cplx circulant_eigenvalue(double R, double J, double Delta, double k);

// Dense eigenvalues of M.  Averaged PBC spectra are matched to the circulant
// form, ordered by decreasing k and wound as a curve; otherwise the points are ordered
// by angle about the reference and the winding comes from the phase of
// det(M(phi) - lambda_ref) as a flux phi is threaded through the wrap bond.
// The reference defaults to the spectral centroid.
MasterSpectrum master_spectrum(const MasterOperator& op,
                               std::optional<cplx> reference = std::nullopt);

// Winding of det(M(phi) - ref) over phi in [0, 2 pi), where M(0, L-1) carries
// e^{+i phi} and M(L-1, 0) carries e^{-i phi}.  The allowed momenta then
// retreat as phi grows, so the result equals the winding of lambda(k) in
// decreasing k, the same orientation as winding_number and bott_index.
// Zero for open chains.
double flux_winding(const Eigen::MatrixXd& M, cplx ref, std::size_t phi_points = 256);
double flux_winding(const CMatrix& M, cplx ref, std::size_t phi_points = 256);

struct MasterEvolution {
  ObservableSeries series;                   // Ptot is sum_j <P_j> (not normalized)
  std::vector<std::vector<double>> profiles; // normalized <P> at each output time
};

MasterEvolution evolve_master(const MasterOperator& op, std::span<const double> p0, double dt,
                              double t_final, std::size_t output_stride = 1);

// e^{St} / sqrt(4 pi D t) exp(-(x - v t)^2 / (4 D t))
double continuum_density(double S, double v, double D, double x, double t);

struct BallisticMoments {
  double dX = 0.0;
  double Sigma = 0.0;
};

// dX = 4 J Delta a t^2, Sigma = sqrt(2 (J^2 + Delta^2)) a t
BallisticMoments shorttime_moments(double J, double Delta, double a, double t);

}  // namespace qpskin
