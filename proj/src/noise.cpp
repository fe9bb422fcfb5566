#include "qpskin/noise.hpp"

#include <cmath>
#include <numbers>

#include "qpskin/errors.hpp"

namespace qpskin {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void require_kind(const NoiseSpec& spec, std::initializer_list<NoiseKind> kinds,
                  const char* who) {
  for (auto k : kinds)
    if (spec.kind == k) return;
  throw ParameterError(std::string(who) + ": unsupported noise kind " +
                       to_string(spec.kind));
}

std::vector<double> draw(const NoiseSpec& spec, double dt, std::size_t n_steps,
                         std::uint64_t stream_seed) {
  NoiseStream stream(spec, dt, stream_seed);
  std::vector<double> out(n_steps);
  for (auto& x : out) x = stream.next();
  return out;
}

}  // namespace

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::OU: return "ou";
    case NoiseKind::GaussianWhite: return "gaussian_white";
    case NoiseKind::UniformWhite: return "uniform_white";
    case NoiseKind::Telegraph: return "telegraph";
    case NoiseKind::Levy: return "levy";
  }
  return "unknown";
}

NoiseKind noise_kind_from_string(const std::string& name) {
  for (auto k : {NoiseKind::OU, NoiseKind::GaussianWhite, NoiseKind::UniformWhite,
                 NoiseKind::Telegraph, NoiseKind::Levy})
    if (to_string(k) == name) return k;
  throw ParameterError("unknown noise kind '" + name + "'");
}

void NoiseSpec::validate() const {
  switch (kind) {
    case NoiseKind::OU:
      if (!(sigma >= 0.0)) throw ParameterError("OU sigma must be >= 0");
      if (!(theta > 0.0)) throw ParameterError("OU theta must be > 0");
      break;
    case NoiseKind::GaussianWhite:
    case NoiseKind::UniformWhite:
      if (!(sigma >= 0.0)) throw ParameterError("white-noise sigma must be >= 0");
      break;
    case NoiseKind::Telegraph:
      if (!(flip_rate >= 0.0)) throw ParameterError("telegraph flip_rate must be >= 0");
      if (!(amplitude >= 0.0)) throw ParameterError("telegraph amplitude must be >= 0");
      break;
    case NoiseKind::Levy:
      if (!(alpha > 0.0 && alpha <= 2.0))
        throw ParameterError("Levy alpha must lie in (0, 2]");
      if (!(truncation > 0.0)) throw ParameterError("Levy truncation must be > 0");
      if (!(levy_scale >= 0.0)) throw ParameterError("Levy scale must be >= 0");
      break;
  }
}

NoiseSpec NoiseSpec::ou(double sigma, double theta, double mu) {
  NoiseSpec s;
  s.kind = NoiseKind::OU;
  s.sigma = sigma;
  s.theta = theta;
  s.mu = mu;
  return s;
}

NoiseSpec NoiseSpec::gaussian_white(double sigma) {
  NoiseSpec s;
  s.kind = NoiseKind::GaussianWhite;
  s.sigma = sigma;
  return s;
}

NoiseSpec NoiseSpec::uniform_white(double sigma) {
  NoiseSpec s;
  s.kind = NoiseKind::UniformWhite;
  s.sigma = sigma;
  return s;
}

NoiseSpec NoiseSpec::telegraph(double amplitude, double flip_rate) {
  NoiseSpec s;
  s.kind = NoiseKind::Telegraph;
  s.amplitude = amplitude;
  s.flip_rate = flip_rate;
  return s;
}

NoiseSpec NoiseSpec::levy(double alpha, double scale, double truncation) {
  NoiseSpec s;
  s.kind = NoiseKind::Levy;
  s.alpha = alpha;
  s.levy_scale = scale;
  s.truncation = truncation;
  return s;
}

std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t realization,
                                 std::uint64_t site) {
  return splitmix64(splitmix64(splitmix64(seed) ^ realization) ^ site);
}

NoiseStream::NoiseStream(const NoiseSpec& spec, double dt, std::uint64_t stream_seed)
    : spec_(spec), rng_(stream_seed) {
  spec_.validate();
  if (spec_.kind == NoiseKind::OU || spec_.kind == NoiseKind::Telegraph) {
    if (!(dt > 0.0)) throw ParameterError("noise time step must be > 0");
  }
  if (spec_.kind == NoiseKind::OU) {
    decay_ = std::exp(-spec_.theta * dt);
    kick_ = spec_.sigma * std::sqrt(-std::expm1(-2.0 * spec_.theta * dt) / (2.0 * spec_.theta));
  } else if (spec_.kind == NoiseKind::Telegraph) {
    flip_probability_ = spec_.flip_rate * dt;
    if (flip_probability_ >= 0.1)
      throw ApproximationError("telegraph flip_rate*dt = " + std::to_string(flip_probability_) +
                               " >= 0.1; per-step flip approximation invalid");
  }
}

double NoiseStream::next() {
  switch (spec_.kind) {
    case NoiseKind::OU:
      if (!started_) {
        // stationary start: N(mu, sigma^2 / (2 theta))
        state_ = spec_.mu + spec_.sigma / std::sqrt(2.0 * spec_.theta) * normal_(rng_);
        started_ = true;
      } else {
        state_ = spec_.mu + (state_ - spec_.mu) * decay_ + kick_ * normal_(rng_);
      }
      return state_;
    case NoiseKind::GaussianWhite:
      return spec_.sigma * normal_(rng_);
    case NoiseKind::UniformWhite:
      return spec_.sigma * std::sqrt(3.0) * (2.0 * uniform_(rng_) - 1.0);
    case NoiseKind::Telegraph:
      if (!started_) {
        state_ = uniform_(rng_) < 0.5 ? -spec_.amplitude : spec_.amplitude;
        started_ = true;
      } else if (uniform_(rng_) < flip_probability_) {
        state_ = -state_;
      }
      return state_;
    case NoiseKind::Levy:
      return sample_levy();
  }
  return 0.0;
}

// Chambers-Mallows-Stuck, symmetric case.
double NoiseStream::sample_levy() {
  using std::numbers::pi;
  const double a = spec_.alpha;
  double u;
  do {
    u = pi * (uniform_(rng_) - 0.5);
  } while (u <= -pi / 2 || u >= pi / 2);
  double w;
  do {
    w = -std::log(uniform_(rng_));
  } while (!(w > 0.0) || !std::isfinite(w));

  double x;
  if (a == 1.0) {
    x = std::tan(u);
  } else {
    x = std::sin(a * u) / std::pow(std::cos(u), 1.0 / a) *
        std::pow(std::cos(u - a * u) / w, (1.0 - a) / a);
  }
  x *= spec_.levy_scale;
  const double t = spec_.truncation;
  if (x > t) x = t;
  if (x < -t) x = -t;
  return x;
}

NoiseSource::NoiseSource(const NoiseSpec& spec, std::size_t sites, double dt,
                         std::uint64_t seed, std::uint64_t realization)
    : dt_(dt) {
  if (sites == 0) throw ParameterError("noise source needs at least one site");
  streams_.reserve(sites);
  for (std::size_t j = 0; j < sites; ++j)
    streams_.emplace_back(spec, dt, derive_stream_seed(seed, realization, j));
}

void NoiseSource::next(std::span<double> out) {
  for (std::size_t j = 0; j < streams_.size(); ++j) out[j] = streams_[j].next();
}

std::vector<double> ou_path(const NoiseSpec& spec, double dt, std::size_t n_steps,
                            std::uint64_t stream_seed) {
  require_kind(spec, {NoiseKind::OU}, "ou_path");
  if (n_steps == 0) throw ParameterError("ou_path: n_steps must be >= 1");
  return draw(spec, dt, n_steps, stream_seed);
}

std::vector<double> white_path(const NoiseSpec& spec, std::size_t n_steps,
                               std::uint64_t stream_seed) {
  require_kind(spec, {NoiseKind::GaussianWhite, NoiseKind::UniformWhite}, "white_path");
  return draw(spec, 1.0, n_steps, stream_seed);
}

std::vector<double> telegraph_path(const NoiseSpec& spec, double dt,
                                   std::size_t n_steps, std::uint64_t stream_seed) {
  require_kind(spec, {NoiseKind::Telegraph}, "telegraph_path");
  return draw(spec, dt, n_steps, stream_seed);
}

std::vector<double> levy_path(const NoiseSpec& spec, std::size_t n_steps,
                              std::uint64_t stream_seed) {
  require_kind(spec, {NoiseKind::Levy}, "levy_path");
  return draw(spec, 1.0, n_steps, stream_seed);
}

NoiseField noise_field(const NoiseSpec& spec, std::size_t sites, double dt,
                       std::size_t n_steps, std::uint64_t seed,
                       std::uint64_t realization) {
  if (sites == 0) throw ParameterError("noise_field: L must be >= 1");
  NoiseField f;
  f.sites = sites;
  f.n_steps = n_steps;
  f.dt = dt;
  f.seed = seed;
  f.realization = realization;
  f.values.resize(sites * n_steps);
  for (std::size_t j = 0; j < sites; ++j) {
    NoiseStream stream(spec, dt, derive_stream_seed(seed, realization, j));
    for (std::size_t n = 0; n < n_steps; ++n) f.values[j * n_steps + n] = stream.next();
  }
  return f;
}

double estimate_autocorrelation(std::span<const double> path, double dt, double lag) {
  if (!(dt > 0.0)) throw ParameterError("autocorrelation: dt must be > 0");
  const double ratio = lag / dt;
  const double k_real = std::round(ratio);
  if (lag < 0.0 || std::abs(ratio - k_real) > 1e-9 * std::max(1.0, ratio))
    throw ParameterError("autocorrelation: lag must be a non-negative multiple of dt");
  const auto k = static_cast<std::size_t>(k_real);
  const std::size_t n = path.size();
  if (n == 0 || 2 * k >= n) throw ParameterError("autocorrelation: lag out of range");

  double mean = 0.0;
  for (double x : path) mean += x;
  mean /= static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i + k < n; ++i) acc += (path[i] - mean) * (path[i + k] - mean);
  return acc / static_cast<double>(n - k);
}

}  // namespace qpskin
