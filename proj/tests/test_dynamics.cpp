#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <doctest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "qpskin/dynamics.hpp"
#include "qpskin/errors.hpp"
#include "qpskin/experiment.hpp"
#include "qpskin/observables.hpp"

using namespace qpskin;

namespace {

LatticeModel chain(double J, double Delta, double W, std::size_t L) {
  LatticeModel m;
  m.J = J;
  m.Delta = Delta;
  m.W = W;
  m.L = L;
  return m;
}

NoiseFeed silent() {
  return [](std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
}

}  // namespace

TEST_CASE("initial_state: delta and random starts") {
  const CVector c = initial_state(InitialSpec::delta_center(), 100);
  CHECK(c(49) == cplx(1.0, 0.0));
  CHECK(c.norm() == 1.0);
  CHECK(initial_state(InitialSpec::delta_center(), 5)(2) == cplx(1.0, 0.0));

  const CVector e1 = initial_state(InitialSpec::delta_at(1), 40);
  CHECK(e1(0) == cplx(1.0, 0.0));
  CHECK(e1.norm() == 1.0);

  const CVector r1 = initial_state(InitialSpec::random(), 100, 9);
  const CVector r2 = initial_state(InitialSpec::random(), 100, 9);
  const CVector r3 = initial_state(InitialSpec::random(), 100, 10);
  CHECK(r1 == r2);
  CHECK(r1 != r3);
  CHECK(std::abs(r1.norm() - 1.0) < 1e-14);
  CHECK(r1.cwiseAbs().minCoeff() > 0.0);

  CHECK_THROWS_AS(initial_state(InitialSpec::delta_at(0), 40), ParameterError);
  CHECK_THROWS_AS(initial_state(InitialSpec::delta_at(41), 40), ParameterError);
}

TEST_CASE("evolve: zero hopping keeps every |A_j| fixed under noise") {
  const auto m = chain(0.0, 0.0, 1.0, 20);
  const double dt = 1e-3, t_final = 5.0;
  const auto noise = noise_field(NoiseSpec::ou(2.0, 1.0), 20, dt, step_count(dt, t_final), 3);
  const CVector psi0 = initial_state(InitialSpec::random(), 20, 4);
  const auto traj = evolve(build_aah(m), noise, psi0, dt, t_final, 500);
  double worst = 0.0;
  for (const auto& a : traj.amplitudes)
    worst = std::max(worst, (a.cwiseAbs() - psi0.cwiseAbs()).cwiseAbs().maxCoeff());
  CHECK(worst < 1e-8);
}

TEST_CASE("evolve: trajectory layout") {
  const auto m = chain(1.5, 0.5, 2.0, 10);
  const CVector psi0 = initial_state(InitialSpec::delta_center(), 10);
  const auto noise = noise_field(NoiseSpec::ou(1.0, 1.0), 10, 0.01, 100, 1);
  const auto traj = evolve(build_aah(m), noise, psi0, 0.01, 1.0, 30);
  REQUIRE(traj.times.size() == 5);  // steps 0, 30, 60, 90, 100
  CHECK(traj.times[0] == 0.0);
  CHECK(traj.times.back() == doctest::Approx(1.0));
  CHECK(traj.amplitudes[0] == psi0);
  CHECK(traj.raw_norms[0] == 1.0);
  for (const auto& a : traj.amplitudes) CHECK(std::abs(a.squaredNorm() - 1.0) < 1e-10);
}

TEST_CASE("evolve: noiseless RK4 agrees with the matrix exponential") {
  for (double Delta : {0.0, 0.5}) {
    CAPTURE(Delta);
    const auto m = chain(1.5, Delta, 3.0, 30);
    const CMatrix h = build_aah(m);
    const CVector psi0 = initial_state(InitialSpec::random(), 30, 5);
    const double t = 2.0;
    const auto noise = noise_field(NoiseSpec::ou(0.0, 1.0), 30, 1e-3, 2000, 0);
    const auto traj = evolve(h, noise, psi0, 1e-3, t, 2000);

    const CMatrix propagator = (CMatrix(-cplx(0.0, t) * h)).exp();
    const CVector exact = propagator * psi0;
    CHECK(std::abs(traj.raw_norms.back() / exact.squaredNorm() - 1.0) < 1e-9);
    CHECK((traj.amplitudes.back() - exact / exact.norm()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("evolve: Hermitian generator conserves the raw norm over 1e5 steps") {
  const auto m = chain(1.5, 0.0, 2.0, 100);
  NoiseSource noise(NoiseSpec::ou(1.0, 1.0), 100, 1e-3, 21);
  const auto traj = evolve(build_aah(m), noise, initial_state(InitialSpec::delta_center(), 100), 1e-3,
                           100.0, 10000);
  REQUIRE(traj.raw_norms.size() == 11);
  for (double p : traj.raw_norms) CHECK(std::abs(p - 1.0) < 1e-6);
}

TEST_CASE("evolve: halving dt at the reference point changes |A_j| by < 1e-4") {
  const auto m = chain(1.5, 0.5, 10.0, 100);
  const CMatrix h = build_aah(m);
  const CVector psi0 = initial_state(InitialSpec::delta_center(), 100);
  const double dt = 5e-3, t_final = 10.0;
  const std::size_t n = step_count(dt, t_final);
  const auto noise = noise_field(NoiseSpec::ou(10.0, 1.0), 100, dt, n, 77);

  auto run = [&](std::size_t sub) {
    std::size_t k = 0;
    NoiseFeed feed = [&](std::span<double> out) {
      const std::size_t column = k++ / sub;  // same sample held over the sub-steps
      for (std::size_t j = 0; j < 100; ++j) out[j] = noise(j, column);
    };
    CVector last;
    const std::vector<std::size_t> steps{n * sub};
    integrate(h, 100, feed, psi0, dt / static_cast<double>(sub), steps,
              [&](std::size_t, double, const CVector& psi, double) { last = psi; });
    return last;
  };
  const CVector coarse = run(1), fine = run(2);
  CHECK((coarse.cwiseAbs() - fine.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("evolve: unidirectional chain expands in a half light cone") {
  const auto m = chain(1.0, 1.0, 0.0, 100);
  NoiseSource noise(NoiseSpec::ou(0.0, 1.0), 100, 5e-3, 0);
  const auto traj = evolve(build_aah(m), noise, initial_state(InitialSpec::delta_center(), 100), 5e-3,
                           40.0, 20);
  double worst = 0.0;
  for (const auto& a : traj.amplitudes) worst = std::max(worst, a.head(49).squaredNorm());
  CHECK(worst < 0.1);
  CHECK(mean_and_spread(traj.amplitudes.back()).X > 80.0);
}

TEST_CASE("evolve: no noise, W = 10 stays localized") {
  const auto m = chain(1.5, 0.5, 10.0, 100);
  NoiseSource noise(NoiseSpec::ou(0.0, 1.0), 100, 5e-3, 0);
  const auto traj = evolve(build_aah(m), noise, initial_state(InitialSpec::delta_center(), 100), 5e-3,
                           200.0, 20);
  double worst = 0.0;
  for (const auto& a : traj.amplitudes) worst = std::max(worst, std::abs(mean_and_spread(a).X - 50.0));
  CHECK(worst < 3.0);
}

TEST_CASE("evolve: OU noise sigma = 10 restores the drift to 0.8 L") {
  EnsembleSpec spec;
  spec.model = chain(1.5, 0.5, 10.0, 100);
  spec.noise = NoiseSpec::ou(10.0, 1.0);
  spec.t_final = 200.0;
  spec.output_steps = strided_outputs(step_count(spec.dt, spec.t_final), 200);
  spec.ensemble_size = 4;
  spec.master_seed = 2024;
  const auto res = run_ensemble(spec);
  const auto tau = relaxation_time(res.mean, 100);
  REQUIRE(tau.has_value());
  CHECK(*tau < 200.0);
}

TEST_CASE("evolve: two-orbital model shares the cell noise") {
  GainLossModel g;
  g.N = 4;
  g.t1 = 0.0;
  g.t2 = 0.0;
  g.t3 = 0.0;
  g.Gamma = 0.0;
  const CMatrix h = build_gainloss(g);
  const auto noise = noise_field(NoiseSpec::ou(2.0, 1.0), 4, 0.01, 100, 8);
  CVector psi0 = CVector::Constant(8, cplx(1.0 / std::sqrt(8.0), 0.0));
  const auto traj = evolve(h, noise, psi0, 0.01, 1.0, 100);
  const CVector& a = traj.amplitudes.back();
  for (Eigen::Index c = 0; c < 4; ++c) CHECK(std::abs(a(2 * c) - a(2 * c + 1)) < 1e-15);
}

TEST_CASE("evolve: argument errors") {
  const auto m = chain(1.5, 0.5, 0.0, 10);
  const CMatrix h = build_aah(m);
  const CVector psi0 = initial_state(InitialSpec::delta_center(), 10);
  const auto noise = noise_field(NoiseSpec::ou(1.0, 1.0), 10, 0.01, 50, 1);
  CHECK_THROWS_AS(evolve(h, noise, psi0, 0.0, 1.0), ParameterError);
  CHECK_THROWS_AS(evolve(h, noise, psi0, 0.02, 0.5), ParameterError);  // dt mismatch
  CHECK_THROWS_AS(evolve(h, noise, psi0, 0.01, 1.0), ParameterError);  // field too short
  CHECK_THROWS_AS(evolve(h, noise, initial_state(InitialSpec::delta_center(), 12), 0.01, 0.2),
                  ParameterError);
  CHECK_THROWS_AS(Propagator(h, 7), ParameterError);
}

TEST_CASE("integrate: non-finite amplitudes name the failing step") {
  const auto m = chain(1.5, 0.5, 0.0, 10);
  std::size_t calls = 0;
  NoiseFeed feed = [&](std::span<double> out) {
    const double v = ++calls == 40 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
    std::fill(out.begin(), out.end(), v);
  };
  const std::vector<std::size_t> steps{0, 100};
  try {
    integrate(build_aah(m), 10, feed, initial_state(InitialSpec::delta_center(), 10), 0.01, steps,
              [](std::size_t, double, const CVector&, double) {});
    FAIL("expected IntegrationError");
  } catch (const IntegrationError& e) {
    CHECK(e.step() == 48);  // first guard check after step 40
  }
}

TEST_CASE("integrate: overflow guard keeps the log norm finite") {
  GainLossModel g;  // large Gamma amplifies the b sublattice
  g.N = 10;
  g.Gamma = 20.0;
  const CMatrix h = build_gainloss(g);
  CVector psi0 = CVector::Zero(20);
  psi0(9) = 1.0;
  std::vector<double> log_norms;
  const std::vector<std::size_t> steps{0, 20000};
  integrate(h, 10, silent(), psi0, 1e-3, steps,
            [&](std::size_t, double, const CVector& psi, double ln) {
              CHECK(std::abs(psi.squaredNorm() - 1.0) < 1e-10);
              log_norms.push_back(ln);
            });
  REQUIRE(log_norms.size() == 2);
  CHECK(std::isfinite(log_norms[1]));
  CHECK(log_norms[1] > 700.0);  // beyond double range as a plain norm
}

TEST_CASE("output grids") {
  CHECK(step_count(5e-3, 200.0) == 40000);
  CHECK(step_count(0.3, 1.0) == 4);
  CHECK(strided_outputs(10, 4) == std::vector<std::size_t>{0, 4, 8, 10});
  const auto lg = log_spaced_outputs(1000, 10, 1);
  CHECK(lg == std::vector<std::size_t>{0, 10, 100, 1000});
}
