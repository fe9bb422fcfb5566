#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "qpskin/errors.hpp"
#include "qpskin/experiment.hpp"
#include "qpskin/observables.hpp"

using namespace qpskin;

namespace {

ObservableSeries synthetic(const std::vector<double>& t, double (*x)(double), double (*s2)(double)) {
  ObservableSeries s;
  for (double ti : t) s.push(ti, MeanSpread{x(ti), std::sqrt(s2(ti))}, 1.0);
  return s;
}

std::vector<double> grid(double t0, double t1, std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n - 1);
  return t;
}

}  // namespace

TEST_CASE("mean_and_spread: point mass, two points, uniform") {
  CVector psi = CVector::Zero(100);
  psi(49) = 1.0;
  auto m = mean_and_spread(psi);
  CHECK(m.X == 50.0);
  CHECK(m.Sigma == 0.0);

  psi.setZero();
  psi(48) = std::sqrt(0.5);
  psi(50) = cplx(0.0, std::sqrt(0.5));
  m = mean_and_spread(psi);
  CHECK(m.X == doctest::Approx(50.0));
  CHECK(m.Sigma == doctest::Approx(1.0));

  psi = CVector::Constant(100, cplx(0.1, 0.0));
  m = mean_and_spread(psi);
  CHECK(m.X == doctest::Approx(50.5));
  CHECK(m.Sigma == doctest::Approx(std::sqrt((100.0 * 100.0 - 1.0) / 12.0)));
  CHECK(m.Sigma == doctest::Approx(28.866).epsilon(1e-4));
}

TEST_CASE("mean_and_spread: unnormalized input is a contract violation") {
  CVector psi = CVector::Zero(10);
  psi(3) = 1.1;
  CHECK_THROWS_AS(mean_and_spread(psi), ContractViolation);
}

TEST_CASE("mean_and_spread: two orbitals share the cell label") {
  CVector psi = CVector::Zero(8);
  psi(4) = std::sqrt(0.5);  // cell 3, orbital a
  psi(5) = std::sqrt(0.5);  // cell 3, orbital b
  const auto m = mean_and_spread(psi, 2);
  CHECK(m.X == doctest::Approx(3.0));
  CHECK(m.Sigma == doctest::Approx(0.0));
}

TEST_CASE("ensemble_average: copies and linear series") {
  const auto t = grid(0.0, 10.0, 11);
  const auto a = synthetic(t, [](double x) { return x; }, [](double x) { return x; });
  const auto b = synthetic(t, [](double x) { return 3.0 * x; }, [](double x) { return 3.0 * x; });

  const std::vector<ObservableSeries> same{a, a, a};
  const auto s = ensemble_average(same);
  CHECK(s.X == a.X);
  CHECK(s.dX == a.dX);
  CHECK(s.ensemble_size == 3);
  for (double e : s.X_stderr) CHECK(e == 0.0);

  const std::vector<ObservableSeries> pair{a, b};
  const auto m = ensemble_average(pair);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(m.X[i] == doctest::Approx(2.0 * t[i]));
    CHECK(m.Sigma2[i] == doctest::Approx(2.0 * t[i]));
    // Two members at t and 3t: sample std-dev sqrt(2) t, standard error t.
    CHECK(m.X_stderr[i] == doctest::Approx(t[i]));
  }
}

TEST_CASE("ensemble_average: grid mismatch") {
  const auto a = synthetic(grid(0.0, 1.0, 5), [](double x) { return x; }, [](double x) { return x; });
  const auto b = synthetic(grid(0.0, 2.0, 5), [](double x) { return x; }, [](double x) { return x; });
  const auto c = synthetic(grid(0.0, 1.0, 6), [](double x) { return x; }, [](double x) { return x; });
  CHECK_THROWS_AS(ensemble_average(std::vector<ObservableSeries>{a, b}), ParameterError);
  CHECK_THROWS_AS(ensemble_average(std::vector<ObservableSeries>{a, c}), ParameterError);
  CHECK_THROWS_AS(ensemble_average(std::vector<ObservableSeries>{}), ParameterError);
}

TEST_CASE("relaxation_time: linear crossing and non-crossing") {
  const auto t = grid(0.0, 100.0, 41);
  const auto s = synthetic(t, [](double x) { return 50.0 + x; }, [](double) { return 1.0; });
  REQUIRE(relaxation_time(s, 100).has_value());
  CHECK(*relaxation_time(s, 100) == doctest::Approx(30.0));
  const auto flat = synthetic(t, [](double) { return 50.0; }, [](double) { return 1.0; });
  CHECK_FALSE(relaxation_time(flat, 100).has_value());
}

TEST_CASE("relaxation_time: interpolates between bracketing points") {
  ObservableSeries s;
  s.push(0.0, {50.0, 0.0}, 1.0);
  s.push(10.0, {70.0, 0.0}, 1.0);
  s.push(20.0, {90.0, 0.0}, 1.0);
  CHECK(*relaxation_time(s, 100) == doctest::Approx(15.0));
}

TEST_CASE("fit_drift_diffusion: exact linear data") {
  const auto t = grid(0.0, 1000.0, 2001);
  const auto s = synthetic(t, [](double x) { return 50.0 + 0.06 * x; }, [](double x) { return 0.1 * x; });
  const auto fit = fit_drift_diffusion(s, 100);
  CHECK(fit.v == doctest::Approx(0.06).epsilon(1e-12));
  CHECK(fit.D == doctest::Approx(0.05).epsilon(1e-12));
  // Window: travelled fraction 0.2 at t = 166.7, 0.7 at t = 583.3.
  CHECK(fit.t_begin == doctest::Approx(167.0));
  CHECK(fit.t_end == doctest::Approx(583.5));

  const auto flat = synthetic(t, [](double) { return 50.0; }, [](double x) { return x; });
  CHECK_THROWS_AS(fit_drift_diffusion(flat, 100), FitError);
}

TEST_CASE("fit_scaling_exponent: power laws") {
  const auto t = grid(0.01, 1.0, 100);
  std::vector<double> sq, root;
  for (double x : t) {
    sq.push_back(7.0 * x * x);
    root.push_back(3.0 * std::sqrt(x));
  }
  CHECK(fit_scaling_exponent(t, sq, 0.05, 0.5) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit_scaling_exponent(t, root, 0.05, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(fit_scaling_exponent(t, sq, 0.5, 0.55), FitError);
  sq[30] = 0.0;
  CHECK_THROWS_AS(fit_scaling_exponent(t, sq, 0.05, 0.5), FitError);
}

TEST_CASE("ensemble at W = 10, sigma = 10: standard error and size dependence of tau") {
  // 100 realizations each at L = 50, 100, 150.
  std::vector<double> taus;
  for (std::size_t L : {50, 100, 150}) {
    EnsembleSpec spec;
    LatticeModel m;
    m.W = 10.0;
    m.L = L;
    spec.model = m;
    spec.noise = NoiseSpec::ou(10.0, 1.0);
    spec.t_final = 2.5 * static_cast<double>(L);
    spec.output_steps = strided_outputs(step_count(spec.dt, spec.t_final), 200);
    spec.ensemble_size = 100;
    spec.master_seed = 5150 + L;
    const auto res = run_ensemble(spec);
    const auto tau = relaxation_time(res.mean, L);
    CAPTURE(L);
    REQUIRE(tau.has_value());
    taus.push_back(*tau);
    MESSAGE("L = " << L << ": tau_relax = " << *tau);

    if (L == 100) {
      const std::size_t mid = res.mean.size() / 2;
      CHECK(res.mean.X_stderr[mid] < 0.05 * res.mean.dX[mid]);
      CHECK(res.mean.ensemble_size == 100);
    }
  }
  CHECK(taus[0] < taus[1]);
  CHECK(taus[1] < taus[2]);
  // Near-proportional to L: tau / L varies by less than 20% across the three sizes.
  const double r0 = taus[0] / 50.0, r1 = taus[1] / 100.0, r2 = taus[2] / 150.0;
  CHECK(std::max({r0, r1, r2}) / std::min({r0, r1, r2}) < 1.2);
}
