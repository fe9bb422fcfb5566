#include "qpskin/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "qpskin/errors.hpp"

namespace qpskin {

namespace {

constexpr double kRescaleHigh = 1e200;
constexpr double kRescaleLow = 1e-200;
constexpr std::size_t kGuardInterval = 16;

double norm_squared(std::span<const cplx> psi) {
  double s = 0.0;
  for (const auto& z : psi) s += std::norm(z);
  return s;
}

}  // namespace

CVector initial_state(const InitialSpec& spec, std::size_t L, std::uint64_t seed) {
  if (L < 2) throw ParameterError("initial_state: L must be >= 2");
  CVector psi = CVector::Zero(static_cast<Eigen::Index>(L));
  switch (spec.kind) {
    case InitialKind::DeltaCenter:
      psi((static_cast<Eigen::Index>(L) + 1) / 2 - 1) = 1.0;
      break;
    case InitialKind::DeltaAt:
      if (spec.site < 1 || spec.site > L)
        throw ParameterError("initial_state: delta site " + std::to_string(spec.site) +
                             " outside [1, " + std::to_string(L) + "]");
      psi(static_cast<Eigen::Index>(spec.site) - 1) = 1.0;
      break;
    case InitialKind::Random: {
      std::mt19937_64 rng(derive_stream_seed(seed, 0xA11CE, L));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (Eigen::Index j = 0; j < psi.size(); ++j) {
        const double amp = unit(rng);
        const double phase = 2.0 * std::numbers::pi * unit(rng);
        psi(j) = std::polar(amp, phase);
      }
      const double n = psi.norm();
      if (n == 0.0) psi(0) = 1.0;
      else psi /= n;
      break;
    }
  }
  return psi;
}

Propagator::Propagator(const CMatrix& hamiltonian, std::size_t noise_sites)
    : op_(hamiltonian), noise_sites_(noise_sites) {
  if (hamiltonian.rows() != hamiltonian.cols())
    throw ParameterError("Propagator: Hamiltonian must be square");
  const std::size_t n = op_.size();
  if (noise_sites == n) orbitals_ = 1;
  else if (noise_sites * 2 == n) orbitals_ = 2;
  else
    throw ParameterError("Propagator: noise has " + std::to_string(noise_sites) +
                         " sites but the Hamiltonian has dimension " + std::to_string(n));
  potential_.assign(n, 0.0);
  k1_.assign(n, {});
  k2_.assign(n, {});
  k3_.assign(n, {});
  k4_.assign(n, {});
  tmp_.assign(n, {});
}

// out = -i (H + diag(potential)) psi
void Propagator::rhs(std::span<const cplx> psi, std::span<cplx> out) {
  op_.apply(psi, out);
  const std::size_t n = op_.size();
  for (std::size_t r = 0; r < n; ++r) {
    const cplx z = out[r] + potential_[r] * psi[r];
    out[r] = cplx(z.imag(), -z.real());
  }
}

void Propagator::step(std::span<cplx> psi, std::span<const double> xi, double dt) {
  const std::size_t n = op_.size();
  for (std::size_t r = 0; r < n; ++r) potential_[r] = xi[r / orbitals_];

  const double half = 0.5 * dt;
  rhs(psi, k1_);
  for (std::size_t r = 0; r < n; ++r) tmp_[r] = psi[r] + half * k1_[r];
  rhs(tmp_, k2_);
  for (std::size_t r = 0; r < n; ++r) tmp_[r] = psi[r] + half * k2_[r];
  rhs(tmp_, k3_);
  for (std::size_t r = 0; r < n; ++r) tmp_[r] = psi[r] + dt * k3_[r];
  rhs(tmp_, k4_);
  const double sixth = dt / 6.0;
  for (std::size_t r = 0; r < n; ++r)
    psi[r] += sixth * (k1_[r] + 2.0 * (k2_[r] + k3_[r]) + k4_[r]);
}

std::size_t step_count(double dt, double t_final) {
  if (!(dt > 0.0)) throw ParameterError("time step dt must be > 0");
  if (!(t_final >= 0.0)) throw ParameterError("t_final must be >= 0");
  return static_cast<std::size_t>(std::ceil(t_final / dt - 1e-9));
}

std::vector<std::size_t> strided_outputs(std::size_t n_steps, std::size_t stride) {
  if (stride == 0) throw ParameterError("output_stride must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n <= n_steps; n += stride) out.push_back(n);
  if (out.back() != n_steps) out.push_back(n_steps);
  return out;
}

std::vector<std::size_t> log_spaced_outputs(std::size_t n_steps, std::size_t first_step,
                                            std::size_t per_decade) {
  if (per_decade == 0 || first_step == 0)
    throw ParameterError("log_spaced_outputs: first_step and per_decade must be >= 1");
  std::vector<std::size_t> out{0};
  const double ratio = std::pow(10.0, 1.0 / static_cast<double>(per_decade));
  for (double s = static_cast<double>(first_step); s < static_cast<double>(n_steps); s *= ratio) {
    const auto n = static_cast<std::size_t>(std::llround(s));
    if (n > out.back()) out.push_back(n);
  }
  if (out.back() != n_steps) out.push_back(n_steps);
  return out;
}

void integrate(const CMatrix& hamiltonian, std::size_t noise_sites, const NoiseFeed& noise,
               const CVector& psi0, double dt, std::span<const std::size_t> output_steps,
               const StepObserver& observer) {
  if (!(dt > 0.0)) throw ParameterError("time step dt must be > 0");
  if (psi0.size() != hamiltonian.rows())
    throw ParameterError("initial state dimension " + std::to_string(psi0.size()) +
                         " does not match Hamiltonian dimension " +
                         std::to_string(hamiltonian.rows()));
  if (output_steps.empty()) return;
  if (!std::is_sorted(output_steps.begin(), output_steps.end()))
    throw ParameterError("output steps must be sorted");

  Propagator prop(hamiltonian, noise_sites);
  const std::size_t n = prop.dimension();
  std::vector<cplx> psi(psi0.data(), psi0.data() + n);
  std::vector<double> xi(noise_sites, 0.0);
  CVector snapshot(static_cast<Eigen::Index>(n));
  double log_scale = 0.0;  // ln of the factor divided out by the guard

  auto emit = [&](std::size_t step) {
    const double p = norm_squared(psi);
    if (!std::isfinite(p) || p == 0.0)
      throw IntegrationError("amplitudes became non-finite or vanished", step);
    const double inv = 1.0 / std::sqrt(p);
    for (std::size_t r = 0; r < n; ++r) snapshot(static_cast<Eigen::Index>(r)) = psi[r] * inv;
    observer(step, static_cast<double>(step) * dt, snapshot, std::log(p) + log_scale);
  };

  std::size_t next_out = 0;
  const std::size_t last = output_steps.back();
  for (std::size_t step = 0;; ++step) {
    while (next_out < output_steps.size() && output_steps[next_out] == step) {
      emit(step);
      ++next_out;
    }
    if (step == last) break;
    noise(xi);
    prop.step(psi, xi, dt);
    if ((step + 1) % kGuardInterval == 0) {
      const double p = norm_squared(psi);
      if (!std::isfinite(p)) throw IntegrationError("amplitudes became non-finite", step + 1);
      if (p > kRescaleHigh || (p < kRescaleLow && p > 0.0)) {
        const double inv = 1.0 / std::sqrt(p);
        for (auto& z : psi) z *= inv;
        log_scale += std::log(p);
      }
    }
  }
}

namespace {

Trajectory collect(const CMatrix& hamiltonian, std::size_t noise_sites, const NoiseFeed& feed,
                   const CVector& psi0, double dt, double t_final, std::size_t stride) {
  const std::size_t n_steps = step_count(dt, t_final);
  const auto outputs = strided_outputs(n_steps, stride);
  Trajectory traj;
  traj.times.reserve(outputs.size());
  integrate(hamiltonian, noise_sites, feed, psi0, dt, outputs,
            [&](std::size_t, double t, const CVector& psi, double log_norm) {
              traj.times.push_back(t);
              traj.amplitudes.push_back(psi);
              traj.log_raw_norms.push_back(log_norm);
              traj.raw_norms.push_back(std::exp(log_norm));
            });
  return traj;
}

}  // namespace

Trajectory evolve(const CMatrix& hamiltonian, const NoiseField& noise, const CVector& psi0,
                  double dt, double t_final, std::size_t output_stride) {
  const std::size_t n_steps = step_count(dt, t_final);
  if (std::abs(noise.dt - dt) > 1e-12 * dt)
    throw ParameterError("noise field dt does not match integration dt");
  if (noise.n_steps < n_steps)
    throw ParameterError("noise field covers " + std::to_string(noise.n_steps) +
                         " steps but " + std::to_string(n_steps) + " are needed");
  std::size_t column = 0;
  NoiseFeed feed = [&](std::span<double> out) {
    for (std::size_t j = 0; j < noise.sites; ++j) out[j] = noise(j, column);
    ++column;
  };
  return collect(hamiltonian, noise.sites, feed, psi0, dt, t_final, output_stride);
}

Trajectory evolve(const CMatrix& hamiltonian, NoiseSource& noise, const CVector& psi0,
                  double dt, double t_final, std::size_t output_stride) {
  if (std::abs(noise.dt() - dt) > 1e-12 * dt)
    throw ParameterError("noise source dt does not match integration dt");
  NoiseFeed feed = [&](std::span<double> out) { noise.next(out); };
  return collect(hamiltonian, noise.sites(), feed, psi0, dt, t_final, output_stride);
}

}  // namespace qpskin
