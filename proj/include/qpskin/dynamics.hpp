#pragma once

// Stochastic Schroedinger dynamics i dpsi/dt = [H + diag(xi(t))] psi.
//
// Classic RK4 with the noise frozen over each step: step n (t_n -> t_n + dt)
// uses noise sample n.  The integration state is never renormalized except
// by the overflow guard; stored amplitudes are normalized at output times and
// the pre-normalization total probability is kept alongside.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "qpskin/banded.hpp"
#include "qpskin/model.hpp"
#include "qpskin/noise.hpp"

namespace qpskin {

enum class InitialKind { DeltaCenter, DeltaAt, Random };

struct InitialSpec {
  InitialKind kind = InitialKind::DeltaCenter;
  std::size_t site = 0;  // 1-based, DeltaAt only

  static InitialSpec delta_center() { return {InitialKind::DeltaCenter, 0}; }
  static InitialSpec delta_at(std::size_t site) { return {InitialKind::DeltaAt, site}; }
  static InitialSpec random() { return {InitialKind::Random, 0}; }
};

// delta_center puts unit weight on site ceil(L/2); random draws |A_j| ~ U[0,1]
// and arg A_j ~ U[0, 2 pi) and normalizes.
CVector initial_state(const InitialSpec& spec, std::size_t L, std::uint64_t seed = 0);

struct Trajectory {
  std::vector<double> times;
  std::vector<CVector> amplitudes;   // unit norm
  std::vector<double> raw_norms;     // P_tot before normalization (inf past 1e308)
  std::vector<double> log_raw_norms; // ln P_tot, always finite
};

// Called at every output step with the normalized state.
using StepObserver =
    std::function<void(std::size_t step, double t, const CVector& normalized, double log_raw_norm)>;

// Supplies the noise sample for the next step (size = noise sites).
using NoiseFeed = std::function<void(std::span<double>)>;

class Propagator {
 public:
  // noise_sites must equal dim(H) or dim(H)/2 (one sample per two-orbital
  // cell, shared by both orbitals).
  Propagator(const CMatrix& hamiltonian, std::size_t noise_sites);

  std::size_t dimension() const noexcept { return op_.size(); }
  std::size_t noise_sites() const noexcept { return noise_sites_; }

  void step(std::span<cplx> psi, std::span<const double> xi, double dt);

 private:
  void rhs(std::span<const cplx> psi, std::span<cplx> out);

  BandedMatrix<cplx> op_;
  std::size_t noise_sites_;
  std::size_t orbitals_;
  std::vector<double> potential_;  // xi broadcast to rows
  std::vector<cplx> k1_, k2_, k3_, k4_, tmp_;
};

std::size_t step_count(double dt, double t_final);

// Step indices 0, stride, 2 stride, ... plus the final step.
std::vector<std::size_t> strided_outputs(std::size_t n_steps, std::size_t stride);

// Roughly log-spaced step indices between first_step and n_steps (inclusive),
// always including 0 and n_steps.
std::vector<std::size_t> log_spaced_outputs(std::size_t n_steps, std::size_t first_step,
                                            std::size_t per_decade);

void integrate(const CMatrix& hamiltonian, std::size_t noise_sites, const NoiseFeed& noise,
               const CVector& psi0, double dt, std::span<const std::size_t> output_steps,
               const StepObserver& observer);

Trajectory evolve(const CMatrix& hamiltonian, const NoiseField& noise, const CVector& psi0,
                  double dt, double t_final, std::size_t output_stride = 1);

Trajectory evolve(const CMatrix& hamiltonian, NoiseSource& noise, const CVector& psi0,
                  double dt, double t_final, std::size_t output_stride = 1);

}  // namespace qpskin
