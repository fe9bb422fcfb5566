#pragma once

// Per-site temporal noise processes.
//
// Every site owns an independent random stream whose seed is derived from
// (master seed, realization index, site index) by a counter-style hash, so a
// realization can be regenerated bit-exactly and realizations can be produced
// in any order or concurrently.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace qpskin {

enum class NoiseKind { OU, GaussianWhite, UniformWhite, Telegraph, Levy };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::OU;
  double sigma = 0.0;      // OU volatility, Gaussian std-dev, uniform std-dev
  double theta = 1.0;      // OU mean-reversion rate
  double mu = 0.0;         // OU long-term mean
  double amplitude = 0.0;  // telegraph level, values are +-amplitude
  double flip_rate = 0.0;  // telegraph gamma_flip
  double alpha = 2.0;      // Levy stability index in (0, 2]
  double levy_scale = 0.0;
  double truncation = std::numeric_limits<double>::infinity();

  // Throws ParameterError on the first violated invariant.
  void validate() const;

  static NoiseSpec ou(double sigma, double theta = 1.0, double mu = 0.0);
  static NoiseSpec gaussian_white(double sigma);
  static NoiseSpec uniform_white(double sigma);
  static NoiseSpec telegraph(double amplitude, double flip_rate);
  static NoiseSpec levy(double alpha, double scale,
                        double truncation = std::numeric_limits<double>::infinity());
};

// Stream seed for one (seed, realization, site) triple.
std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t realization,
                                 std::uint64_t site);

// Sequential sampler for a single site. next() returns the value held during
// step n on the n-th call (n = 0, 1, ...).
class NoiseStream {
 public:
  NoiseStream(const NoiseSpec& spec, double dt, std::uint64_t stream_seed);

  double next();

 private:
  double sample_levy();

  NoiseSpec spec_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  double state_ = 0.0;
  bool started_ = false;
  double decay_ = 0.0;  // OU: exp(-theta dt)
  double kick_ = 0.0;   // OU: sigma sqrt((1 - exp(-2 theta dt)) / (2 theta))
  double flip_probability_ = 0.0;
};

// All sites of one realization, advanced together one step at a time.
class NoiseSource {
 public:
  NoiseSource(const NoiseSpec& spec, std::size_t sites, double dt,
              std::uint64_t seed, std::uint64_t realization = 0);

  std::size_t sites() const noexcept { return streams_.size(); }
  double dt() const noexcept { return dt_; }

  // Writes the values for the next step into out (size == sites()).
  void next(std::span<double> out);

 private:
  std::vector<NoiseStream> streams_;
  double dt_;
};

// Materialized noise: values[j * n_steps + n] is site j at step n.
struct NoiseField {
  std::size_t sites = 0;
  std::size_t n_steps = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t realization = 0;
  std::vector<double> values;

  double operator()(std::size_t site, std::size_t step) const {
    return values[site * n_steps + step];
  }
  std::span<const double> row(std::size_t site) const {
    return {values.data() + site * n_steps, n_steps};
  }
};

std::vector<double> ou_path(const NoiseSpec& spec, double dt, std::size_t n_steps,
                            std::uint64_t stream_seed);
std::vector<double> white_path(const NoiseSpec& spec, std::size_t n_steps,
                               std::uint64_t stream_seed);
std::vector<double> telegraph_path(const NoiseSpec& spec, double dt,
                                   std::size_t n_steps, std::uint64_t stream_seed);
std::vector<double> levy_path(const NoiseSpec& spec, std::size_t n_steps,
                              std::uint64_t stream_seed);

NoiseField noise_field(const NoiseSpec& spec, std::size_t sites, double dt,
                       std::size_t n_steps, std::uint64_t seed,
                       std::uint64_t realization = 0);

// (1/(N-k)) sum_n (x_n - mean)(x_{n+k} - mean) with k = lag/dt.
double estimate_autocorrelation(std::span<const double> path, double dt, double lag);

}  // namespace qpskin
