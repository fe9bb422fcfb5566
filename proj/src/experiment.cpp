#include "qpskin/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "qpskin/errors.hpp"
#include "qpskin/kernel.hpp"
#include "qpskin/master.hpp"
#include "qpskin/spectral.hpp"

#ifndef QPSKIN_VERSION
#define QPSKIN_VERSION "unknown"
#endif

namespace qpskin {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kRealizationTag = 0x5EED0000ull;

// ---------------------------------------------------------------- parsing

class Block {
 public:
  Block(const ojson* node, std::string path, std::vector<std::string>& errors)
      : node_(node), path_(std::move(path)), errors_(&errors) {
    if (node_ && !node_->is_object()) {
      error("must be an object");
      node_ = nullptr;
    }
  }

  bool present() const { return node_ != nullptr; }
  bool has(const std::string& key) const { return node_ && node_->contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const auto& v = node_->at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("boolean");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("number");
        if constexpr (std::is_integral_v<T>) {
          const double d = v.get<double>();
          if (d != std::floor(d) || (std::is_unsigned_v<T> && d < 0))
            throw std::invalid_argument(std::is_unsigned_v<T> ? "non-negative integer" : "integer");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("string");
      }
      if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>)
        return static_cast<T>(v.get<double>());
      else
        return v.get<T>();
    } catch (const std::invalid_argument& e) {
      error(key + ": expected " + e.what());
    } catch (const nlohmann::json::exception&) {
      error(key + ": wrong type");
    }
    return fallback;
  }

  cplx complex(const std::string& key, cplx fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const auto& v = node_->at(key);
    if (v.is_number()) return {v.get<double>(), 0.0};
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
      return {v[0].get<double>(), v[1].get<double>()};
    error(key + ": expected a number or [re, im]");
    return fallback;
  }

  std::vector<double> numbers(const std::string& key) {
    seen_.insert(key);
    std::vector<double> out;
    if (!has(key)) return out;
    const auto& v = node_->at(key);
    if (!v.is_array()) {
      error(key + ": expected an array of numbers");
      return out;
    }
    for (const auto& x : v) {
      if (!x.is_number()) {
        error(key + ": expected an array of numbers");
        return {};
      }
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::optional<std::pair<double, double>> window(const std::string& key) {
    if (!has(key)) {
      seen_.insert(key);
      return std::nullopt;
    }
    const auto v = numbers(key);
    if (v.size() != 2 || !(v[0] > 0.0) || !(v[1] > v[0])) {
      error(key + ": expected [t_lo, t_hi] with 0 < t_lo < t_hi");
      return std::nullopt;
    }
    return std::make_pair(v[0], v[1]);
  }

  Block child(const std::string& key) {
    seen_.insert(key);
    return Block(has(key) ? &node_->at(key) : nullptr, path_ + "." + key, *errors_);
  }

  const ojson* node() const { return node_; }

  void error(const std::string& message) { errors_->push_back(path_ + ": " + message); }

  void require(bool ok, const std::string& message) {
    if (!ok) error(message);
  }

  // Reports keys that were never read.
  void finish() {
    if (!node_) return;
    for (auto it = node_->begin(); it != node_->end(); ++it)
      if (!seen_.count(it.key())) error("unknown key '" + it.key() + "'");
  }

 private:
  const ojson* node_;
  std::string path_;
  std::vector<std::string>* errors_;
  std::set<std::string> seen_;
};

Boundary parse_boundary(Block& b, Boundary fallback) {
  const auto name = b.get<std::string>("boundary", fallback == Boundary::OBC ? "obc" : "pbc");
  if (name == "obc") return Boundary::OBC;
  if (name == "pbc") return Boundary::PBC;
  b.error("boundary: expected \"obc\" or \"pbc\", got \"" + name + "\"");
  return fallback;
}

const char* boundary_name(Boundary b) { return b == Boundary::OBC ? "obc" : "pbc"; }

template <typename F>
void collect(std::vector<std::string>& errors, const std::string& where, F&& check) {
  try {
    check();
  } catch (const std::exception& e) {
    errors.push_back(where + ": " + e.what());
  }
}

Model parse_model(Block b, std::vector<std::string>& errors) {
  const auto type = b.get<std::string>("type", "aah");
  if (type == "gainloss") {
    GainLossModel m;
    m.t1 = b.complex("t1", m.t1);
    m.t2 = b.complex("t2", m.t2);
    m.t3 = b.complex("t3", m.t3);
    m.Gamma = b.get("Gamma", m.Gamma);
    m.W = b.get("W", m.W);
    m.beta = b.get("beta", m.beta);
    m.N = b.get<std::size_t>("N", m.N);
    m.boundary = parse_boundary(b, Boundary::OBC);
    b.finish();
    collect(errors, "model", [&] { m.validate(); });
    return m;
  }
  if (type != "aah") b.error("type: expected \"aah\" or \"gainloss\", got \"" + type + "\"");
  LatticeModel m;
  m.J = b.get("J", m.J);
  m.Delta = b.get("Delta", m.Delta);
  m.W = b.get("W", m.W);
  m.beta = b.get("beta", m.beta);
  m.L = b.get<std::size_t>("L", m.L);
  m.a = b.get("a", m.a);
  m.boundary = parse_boundary(b, Boundary::OBC);
  b.finish();
  collect(errors, "model", [&] { m.validate(); });
  return m;
}

NoiseSpec parse_noise(Block b, std::vector<std::string>& errors) {
  NoiseSpec s;
  const auto kind = b.get<std::string>("kind", "ou");
  collect(errors, "noise.kind", [&] { s.kind = noise_kind_from_string(kind); });
  s.sigma = b.get("sigma", s.sigma);
  s.theta = b.get("theta", s.theta);
  s.mu = b.get("mu", s.mu);
  s.amplitude = b.get("amplitude", s.amplitude);
  s.flip_rate = b.get("flip_rate", s.flip_rate);
  s.alpha = b.get("alpha", s.alpha);
  s.levy_scale = b.get("scale", s.levy_scale);
  s.truncation = b.get("truncation", s.truncation);
  b.finish();
  collect(errors, "noise", [&] { s.validate(); });
  return s;
}

InitialSpec parse_initial(Block b, std::size_t cells) {
  const auto kind = b.get<std::string>("kind", "delta_center");
  const auto site = b.get<std::size_t>("site", 0);
  b.finish();
  if (kind == "delta_center") return InitialSpec::delta_center();
  if (kind == "random") return InitialSpec::random();
  if (kind == "delta_at") {
    b.require(site >= 1 && site <= cells,
              "site must lie in [1, " + std::to_string(cells) + "] for delta_at");
    return InitialSpec::delta_at(site);
  }
  b.error("kind: expected delta_center, delta_at or random, got \"" + kind + "\"");
  return {};
}

RunSettings parse_run(Block b) {
  RunSettings r;
  r.dt = b.get("dt", r.dt);
  r.t_final = b.get("t_final", r.t_final);
  r.output_stride = b.get<std::size_t>("output_stride", r.output_stride);
  r.log_per_decade = b.get<std::size_t>("log_per_decade", r.log_per_decade);
  r.ensemble_size = b.get<std::size_t>("ensemble_size", r.ensemble_size);
  r.master_seed = b.get<std::uint64_t>("master_seed", r.master_seed);
  r.record_profiles = b.get("record_profiles", r.record_profiles);
  r.threshold = b.get("threshold", r.threshold);
  r.early_window = b.window("early_window");
  r.late_window = b.window("late_window");
  b.finish();
  b.require(r.dt > 0.0, "dt must be > 0");
  b.require(r.t_final > 0.0, "t_final must be > 0");
  b.require(r.output_stride >= 1, "output_stride must be >= 1");
  b.require(r.ensemble_size >= 1, "ensemble_size must be >= 1");
  b.require(r.threshold > 0.0 && r.threshold <= 1.0, "threshold must lie in (0, 1]");
  return r;
}

}  // namespace

// ------------------------------------------------------------- model helpers

std::size_t cell_count(const Model& model) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, LatticeModel>) return m.L;
        else return m.N;
      },
      model);
}

std::size_t orbitals(const Model& model) {
  return std::holds_alternative<LatticeModel>(model) ? 1 : 2;
}

CMatrix build_hamiltonian(const Model& model) {
  return std::visit(
      [](const auto& m) -> CMatrix {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, LatticeModel>) return build_aah(m);
        else return build_gainloss(m);
      },
      model);
}

std::uint64_t realization_seed(std::uint64_t master_seed, std::size_t realization) {
  return derive_stream_seed(master_seed, realization, kRealizationTag);
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  workers = std::clamp<std::size_t>(workers, 1, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard lock(mutex);
        if (failure && failed_index < i) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------- ensembles

EnsembleResult run_ensemble(const EnsembleSpec& spec, std::size_t workers) {
  if (spec.ensemble_size == 0) throw ParameterError("ensemble_size must be >= 1");
  spec.noise.validate();
  const CMatrix h = build_hamiltonian(spec.model);
  const std::size_t cells = cell_count(spec.model);
  const std::size_t orb = orbitals(spec.model);
  const std::size_t n_steps = step_count(spec.dt, spec.t_final);
  std::vector<std::size_t> outputs = spec.output_steps;
  if (outputs.empty()) outputs = strided_outputs(n_steps, 1);
  if (outputs.back() > n_steps)
    throw ParameterError("output step " + std::to_string(outputs.back()) + " beyond the last step " +
                         std::to_string(n_steps));

  EnsembleResult result;
  for (std::size_t r = 0; r < spec.ensemble_size; ++r)
    result.realization_seeds.push_back(realization_seed(spec.master_seed, r));

  std::vector<ObservableSeries> members(spec.ensemble_size);
  std::vector<std::vector<double>> profiles(spec.record_profiles ? spec.ensemble_size : 0);

  parallel_for(spec.ensemble_size, workers, [&](std::size_t r) {
    const std::uint64_t seed = result.realization_seeds[r];
    CVector psi0;
    if (orb == 1) {
      psi0 = initial_state(spec.initial, cells, seed);
    } else {
      // Cell-resolved start for two-orbital models: the chosen cell's a orbital.
      const CVector cell_state = initial_state(spec.initial, cells, seed);
      psi0 = CVector::Zero(static_cast<Eigen::Index>(2 * cells));
      for (std::size_t c = 0; c < cells; ++c) psi0(static_cast<Eigen::Index>(2 * c)) = cell_state(static_cast<Eigen::Index>(c));
    }
    NoiseSource noise(spec.noise, cells, spec.dt, seed, 0);
    NoiseFeed feed = [&](std::span<double> out) { noise.next(out); };

    ObservableSeries series;
    std::vector<double>* profile = spec.record_profiles ? &profiles[r] : nullptr;
    if (profile) profile->reserve(outputs.size() * cells);
    try {
      integrate(h, cells, feed, psi0, spec.dt, outputs,
                [&](std::size_t, double t, const CVector& psi, double log_norm) {
                  series.push(t, mean_and_spread(psi, orb), std::exp(log_norm));
                  if (profile) {
                    for (std::size_t c = 0; c < cells; ++c) {
                      double p = 0.0;
                      for (std::size_t o = 0; o < orb; ++o)
                        p += std::norm(psi(static_cast<Eigen::Index>(c * orb + o)));
                      profile->push_back(p);
                    }
                  }
                });
    } catch (const IntegrationError& e) {
      throw IntegrationError("realization " + std::to_string(r) + ": " + e.what(), e.step());
    }
    members[r] = std::move(series);
  });

  result.mean = ensemble_average(members);
  if (spec.record_profiles) {
    result.profiles.assign(outputs.size(), std::vector<double>(cells, 0.0));
    const double m = static_cast<double>(spec.ensemble_size);
    for (const auto& member : profiles)
      for (std::size_t i = 0; i < outputs.size(); ++i)
        for (std::size_t c = 0; c < cells; ++c) result.profiles[i][c] += member[i * cells + c] / m;
  }
  if (spec.keep_members) result.members = std::move(members);
  return result;
}

// ------------------------------------------------------------------- config

std::string axis_pointer(const std::string& axis, const ojson& raw) {
  if (!axis.empty() && axis.front() == '/') return axis;
  static const std::vector<std::pair<std::string, std::vector<std::string>>> blocks{
      {"model", {"J", "Delta", "W", "beta", "L", "a", "t1", "t2", "t3", "Gamma", "N"}},
      {"noise", {"sigma", "theta", "mu", "amplitude", "flip_rate", "alpha", "scale", "truncation"}},
      {"run", {"dt", "t_final", "output_stride", "ensemble_size", "master_seed", "threshold"}},
      {"initial", {"site"}},
  };
  for (const auto& [block, keys] : blocks)
    if (std::find(keys.begin(), keys.end(), axis) != keys.end()) return "/" + block + "/" + axis;
  (void)raw;
  throw ParameterError("sweep axis '" + axis + "' does not name a configurable parameter");
}

ExperimentConfig parse_config(const ojson& raw) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  c.raw = raw;
  Block root(&raw, "config", errors);
  if (!root.present()) throw ParameterError("configuration must be a JSON object");

  c.task = root.get<std::string>("task", c.task);
  if (std::find(task_names().begin(), task_names().end(), c.task) == task_names().end())
    root.error("task: unknown task \"" + c.task + "\"");

  c.model = parse_model(root.child("model"), errors);
  const std::size_t cells = cell_count(c.model);
  c.noise = parse_noise(root.child("noise"), errors);
  c.initial = parse_initial(root.child("initial"), cells);
  c.run = parse_run(root.child("run"));

  {
    Block b = root.child("spectrum");
    c.spectrum.r1 = b.get<std::size_t>("r1", c.spectrum.r1);
    c.spectrum.r2 = b.get<std::size_t>("r2", cells);
    c.spectrum.lambda = b.get("lambda", c.spectrum.lambda);
    b.finish();
    b.require(c.spectrum.r1 >= 1 && c.spectrum.r1 <= cells, "r1 outside the chain");
    b.require(c.spectrum.r2 >= 1 && c.spectrum.r2 <= cells, "r2 outside the chain");
    b.require(c.spectrum.lambda > 0.0, "lambda must be > 0");
  }
  {
    Block b = root.child("bott");
    c.bott.re_points = b.get<std::size_t>("re_points", c.bott.re_points);
    c.bott.im_points = b.get<std::size_t>("im_points", c.bott.im_points);
    c.bott.boundary = parse_boundary(b, c.bott.boundary);
    c.bott.padding = b.get("padding", c.bott.padding);
    if (b.has("box")) {
      const auto box = b.numbers("box");
      if (box.size() == 4 && box[1] >= box[0] && box[3] >= box[2])
        c.bott.box = std::array<double, 4>{box[0], box[1], box[2], box[3]};
      else
        b.error("box: expected [re_min, re_max, im_min, im_max]");
    }
    b.finish();
    b.require(c.bott.re_points >= 1 && c.bott.im_points >= 1, "grid needs at least one point per axis");
    b.require(c.bott.padding >= 0.0, "padding must be >= 0");
  }
  {
    Block b = root.child("kernel");
    c.kernel.j = b.get<std::size_t>("j", c.kernel.j);
    c.kernel.sigmas = b.numbers("sigmas");
    c.kernel.t = b.get("t", c.kernel.t);
    b.finish();
    b.require(c.kernel.j >= 1, "j must be >= 1");
    b.require(c.kernel.t > 0.0, "t must be > 0");
    for (double s : c.kernel.sigmas) b.require(s > 0.0, "sigmas must all be > 0");
    if (c.task == "kernel") b.require(!c.kernel.sigmas.empty(), "sigmas must list at least one value");
  }
  {
    Block b = root.child("master");
    const auto mode = b.get<std::string>("mode", to_string(c.master.mode));
    collect(errors, "config.master.mode", [&] { c.master.mode = kernel_mode_from_string(mode); });
    c.master.dt = b.get("dt", c.master.dt);
    c.master.t_final = b.get("t_final", c.master.t_final);
    c.master.output_stride = b.get<std::size_t>("output_stride", c.master.output_stride);
    if (b.has("start_site")) c.master.start_site = b.get<std::size_t>("start_site", 1);
    b.finish();
    b.require(c.master.dt > 0.0, "dt must be > 0");
    b.require(c.master.t_final >= 0.0, "t_final must be >= 0");
    b.require(c.master.output_stride >= 1, "output_stride must be >= 1");
    if (c.master.start_site)
      b.require(*c.master.start_site >= 1 && *c.master.start_site <= cells, "start_site outside the chain");
  }
  {
    Block b = root.child("sweep");
    Block axes = b.child("axes");
    b.finish();
    if (axes.present()) {
      for (auto it = axes.node()->begin(); it != axes.node()->end(); ++it) {
        const auto values = axes.numbers(it.key());
        if (values.empty()) axes.error(it.key() + ": expected a non-empty array of numbers");
        collect(errors, "config.sweep.axes", [&] { (void)axis_pointer(it.key(), raw); });
        c.sweep.axes.emplace_back(it.key(), values);
      }
    }
  }
  root.finish();

  if (c.task == "kernel" || c.task == "master") {
    if (!std::holds_alternative<LatticeModel>(c.model))
      errors.push_back("config.model: task " + c.task + " needs the aah model");
    if (c.noise.kind != NoiseKind::OU)
      errors.push_back("config.noise: task " + c.task + " is defined for OU noise only");
    if (c.task == "master" && !(c.noise.sigma > 0.0))
      errors.push_back("config.noise: task master needs sigma > 0");
  }
  if (c.task == "simulate" || c.task == "sweep")
    collect(errors, "config.run", [&] {
      NoiseStream probe(c.noise, c.run.dt, 0);
      (void)probe;
    });

  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "invalid configuration (" << errors.size() << " problem" << (errors.size() > 1 ? "s" : "")
        << "):";
    for (const auto& e : errors) msg << "\n  - " << e;
    throw ParameterError(msg.str());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config file " + path.string());
  ojson raw;
  try {
    raw = ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(raw);
}

// -------------------------------------------------------------------- output

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    row_strings(header);
  }

  void row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
      if (!first) out_ << ',';
      out_ << format_number(v);
      first = false;
    }
    out_ << '\n';
  }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

void write_series(const std::filesystem::path& path, const ObservableSeries& s) {
  CsvWriter csv(path, {"t", "X", "dX", "Sigma", "Sigma2", "Ptot", "X_stderr"});
  for (std::size_t i = 0; i < s.size(); ++i)
    csv.row({s.times[i], s.X[i], s.dX[i], s.Sigma[i], s.Sigma2[i], s.Ptot[i], s.X_stderr[i]});
}

double opt(const std::optional<double>& v) { return v.value_or(std::nan("")); }

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::vector<std::size_t> run_outputs(const RunSettings& run) {
  const std::size_t n_steps = step_count(run.dt, run.t_final);
  auto outputs = strided_outputs(n_steps, run.output_stride);
  if (run.log_per_decade > 0) {
    const auto extra = log_spaced_outputs(n_steps, 1, run.log_per_decade);
    outputs.insert(outputs.end(), extra.begin(), extra.end());
    std::sort(outputs.begin(), outputs.end());
    outputs.erase(std::unique(outputs.begin(), outputs.end()), outputs.end());
  }
  return outputs;
}

EnsembleSpec ensemble_spec(const ExperimentConfig& c, bool profiles) {
  EnsembleSpec s;
  s.model = c.model;
  s.noise = c.noise;
  s.initial = c.initial;
  s.dt = c.run.dt;
  s.t_final = c.run.t_final;
  s.output_steps = run_outputs(c.run);
  s.ensemble_size = c.run.ensemble_size;
  s.master_seed = c.run.master_seed;
  s.record_profiles = profiles;
  return s;
}

ojson summary_json(const SimulationSummary& s) {
  ojson j;
  j["tau_relax"] = opt_json(s.tau_relax);
  if (s.transport) {
    j["v"] = s.transport->v;
    j["D"] = s.transport->D;
    j["fit_window"] = {s.transport->t_begin, s.transport->t_end};
  } else {
    j["v"] = nullptr;
    j["D"] = nullptr;
  }
  j["early_dx_exponent"] = opt_json(s.early_dx_exponent);
  j["early_sigma_exponent"] = opt_json(s.early_sigma_exponent);
  j["late_dx_exponent"] = opt_json(s.late_dx_exponent);
  j["late_sigma_exponent"] = opt_json(s.late_sigma_exponent);
  j["final_X"] = s.final_X;
  j["final_argmax_cell"] = s.final_argmax;
  return j;
}

void write_json(const std::filesystem::path& path, const ojson& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct TaskOutput {
  ojson summary;
  std::vector<std::uint64_t> seeds;
};

TaskOutput run_simulate(const ExperimentConfig& c, const std::filesystem::path& dir,
                        std::size_t workers, std::vector<std::filesystem::path>& files) {
  const auto result = run_ensemble(ensemble_spec(c, c.run.record_profiles), workers);
  const auto& m = result.mean;
  files.push_back(dir / "observables.csv");
  write_series(files.back(), m);
  if (c.run.record_profiles) {
    files.push_back(dir / "density.csv");
    CsvWriter csv(files.back(), {"t", "cell", "p"});
    for (std::size_t i = 0; i < result.profiles.size(); ++i)
      for (std::size_t cell = 0; cell < result.profiles[i].size(); ++cell)
        csv.row({m.times[i], static_cast<double>(cell + 1), result.profiles[i][cell]});
  }
  TaskOutput out;
  out.summary = summary_json(summarize(result, c));
  out.summary["ensemble_size"] = m.ensemble_size;
  out.summary["seeds"] = result.realization_seeds;
  out.seeds = result.realization_seeds;
  return out;
}

TaskOutput run_spectrum(const ExperimentConfig& c, const std::filesystem::path& dir,
                        std::vector<std::filesystem::path>& files) {
  const CMatrix h = build_hamiltonian(c.model);
  const auto spec = spectrum_with_weights(h, c.spectrum.r1, c.spectrum.r2, c.spectrum.lambda, orbitals(c.model));
  files.push_back(dir / "spectrum.csv");
  CsvWriter csv(files.back(), {"index", "re_E", "im_E", "w"});
  std::vector<double> abs_w;
  std::size_t positive = 0, negative = 0;
  for (std::size_t n = 0; n < spec.eigenvalues.size(); ++n) {
    csv.row({static_cast<double>(n), spec.eigenvalues[n].real(), spec.eigenvalues[n].imag(), spec.weights[n]});
    abs_w.push_back(std::abs(spec.weights[n]));
    if (spec.weights[n] > 0.05) ++positive;
    if (spec.weights[n] < -0.05) ++negative;
  }
  std::nth_element(abs_w.begin(), abs_w.begin() + static_cast<long>(abs_w.size() / 2), abs_w.end());
  TaskOutput out;
  out.summary["states"] = spec.eigenvalues.size();
  out.summary["fraction_w_above_0.05"] = static_cast<double>(positive) / static_cast<double>(abs_w.size());
  out.summary["fraction_w_below_-0.05"] = static_cast<double>(negative) / static_cast<double>(abs_w.size());
  out.summary["median_abs_w"] = abs_w[abs_w.size() / 2];
  out.summary["max_residual"] = spec.max_residual;
  out.summary["boundary"] = boundary_name(std::visit([](const auto& m) { return m.boundary; }, c.model));
  return out;
}

TaskOutput run_bott(const ExperimentConfig& c, const std::filesystem::path& dir, std::size_t workers,
                    std::vector<std::filesystem::path>& files) {
  Model model = c.model;
  std::visit([&](auto& m) { m.boundary = c.bott.boundary; }, model);
  const CMatrix h = build_hamiltonian(model);
  std::array<double, 4> box{};
  if (c.bott.box) {
    box = *c.bott.box;
  } else {
    const auto ev = eig(h, false).eigenvalues;
    box = {ev[0].real(), ev[0].real(), ev[0].imag(), ev[0].imag()};
    for (const auto& e : ev) {
      box[0] = std::min(box[0], e.real());
      box[1] = std::max(box[1], e.real());
      box[2] = std::min(box[2], e.imag());
      box[3] = std::max(box[3], e.imag());
    }
    // A real spectrum has a degenerate box; pad by a fraction of the widest side.
    const double pad = c.bott.padding * std::max({box[1] - box[0], box[3] - box[2], 1e-12});
    box = {box[0] - pad, box[1] + pad, box[2] - pad, box[3] + pad};
  }
  auto axis = [](double lo, double hi, std::size_t n, std::size_t i) {
    return n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  const std::size_t nr = c.bott.re_points, ni = c.bott.im_points;
  std::vector<BottResult> grid(nr * ni);
  const std::size_t Lx = cell_count(model), orb = orbitals(model);
  parallel_for(grid.size(), workers, [&](std::size_t idx) {
    const std::size_t ir = idx % nr, ii = idx / nr;
    grid[idx] = bott_index(h, {axis(box[0], box[1], nr, ir), axis(box[2], box[3], ni, ii)}, Lx, orb);
  });
  files.push_back(dir / "bott.csv");
  CsvWriter csv(files.back(), {"re_Ea", "im_Ea", "P_x", "min_singular_value", "ill_conditioned"});
  double max_abs = 0.0;
  std::size_t ill = 0;
  for (const auto& b : grid) {
    csv.row({b.energy.real(), b.energy.imag(), b.value, b.min_singular_value, b.ill_conditioned ? 1.0 : 0.0});
    max_abs = std::max(max_abs, std::abs(b.value));
    ill += b.ill_conditioned ? 1 : 0;
  }
  TaskOutput out;
  out.summary["box"] = box;
  out.summary["max_abs_P_x"] = max_abs;
  out.summary["ill_conditioned_points"] = ill;
  out.summary["boundary"] = boundary_name(c.bott.boundary);
  return out;
}

TaskOutput run_kernel(const ExperimentConfig& c, const std::filesystem::path& dir, std::size_t workers,
                      std::vector<std::filesystem::path>& files) {
  const auto& m = std::get<LatticeModel>(c.model);
  const auto& sig = c.kernel.sigmas;
  std::vector<std::array<double, 4>> rows(sig.size());
  parallel_for(sig.size(), workers, [&](std::size_t i) {
    KernelQuery q{c.kernel.j, m.W, m.beta, sig[i], c.noise.theta, c.kernel.t};
    KernelQuery stationary = q;
    stationary.t = KernelQuery::stationary;
    rows[i] = {req_exact(q), req_longtime(stationary), req_strong_noise(sig[i], c.noise.theta),
               req_longtime_avg(m.W, m.beta, sig[i], c.noise.theta)};
  });
  files.push_back(dir / "kernel.csv");
  CsvWriter csv(files.back(), {"sigma", "req_exact", "req_longtime", "req_strong_noise", "req_longtime_avg"});
  for (std::size_t i = 0; i < sig.size(); ++i) csv.row({sig[i], rows[i][0], rows[i][1], rows[i][2], rows[i][3]});
  TaskOutput out;
  out.summary["j"] = c.kernel.j;
  out.summary["theta"] = c.noise.theta;
  out.summary["t"] = std::isinf(c.kernel.t) ? ojson("stationary") : ojson(c.kernel.t);
  if (m.W > 0.0) out.summary["sigma_max"] = sigma_max(m.W, c.noise.theta, m.beta);
  return out;
}

TaskOutput run_master(const ExperimentConfig& c, const std::filesystem::path& dir,
                      std::vector<std::filesystem::path>& files) {
  const auto& m = std::get<LatticeModel>(c.model);
  const auto op = build_master(m, c.noise.sigma, c.noise.theta, c.master.mode);
  const auto spec = master_spectrum(op);
  files.push_back(dir / "master_spectrum.csv");
  {
    CsvWriter csv(files.back(), {"re_lambda", "im_lambda", "k"});
    for (std::size_t i = 0; i < spec.eigenvalues.size(); ++i)
      csv.row({spec.eigenvalues[i].real(), spec.eigenvalues[i].imag(),
               spec.k.empty() ? std::nan("") : spec.k[i]});
  }

  // Static Hamiltonian spectrum on the same chain, emitted raw for comparison.
  const CMatrix h = build_aah(m);
  const auto h_ev = eig(h, false).eigenvalues;
  files.push_back(dir / "hamiltonian_spectrum.csv");
  {
    CsvWriter csv(files.back(), {"re_E", "im_E"});
    for (const auto& e : h_ev) csv.row({e.real(), e.imag()});
  }

  const auto tc = transport_coefficients(op.R_avg, m.J, m.Delta, m.a);
  TaskOutput out;
  out.summary["mode"] = to_string(op.mode);
  out.summary["boundary"] = boundary_name(op.boundary);
  out.summary["R_avg"] = op.R_avg;
  out.summary["S"] = tc.S;
  out.summary["v"] = tc.v;
  out.summary["D"] = tc.D;
  out.summary["signed_area"] = spec.signed_area;
  out.summary["area"] = spec.area;
  out.summary["winding"] = spec.winding;
  out.summary["winding_method"] = spec.winding_method;
  out.summary["reference"] = {spec.reference.real(), spec.reference.imag()};
  out.summary["ordering"] = spec.ordering;
  out.summary["closed_form_deviation"] =
      spec.closed_form_deviation < 0 ? ojson(nullptr) : ojson(spec.closed_form_deviation);
  // Point gap of H at the master reference (0 when quasiperiodic localization
  // has closed it).
  try {
    out.summary["hamiltonian_winding"] = flux_winding(h, spec.reference);
  } catch (const NumericalError&) {
    out.summary["hamiltonian_winding"] = nullptr;
  }

  if (c.master.t_final > 0.0) {
    std::vector<double> p0(m.L, 0.0);
    p0[c.master.start_site.value_or((m.L + 1) / 2) - 1] = 1.0;
    const auto evo = evolve_master(op, p0, c.master.dt, c.master.t_final, c.master.output_stride);
    files.push_back(dir / "master_observables.csv");
    write_series(files.back(), evo.series);
  }
  write_json(dir / "loop.json", out.summary);
  files.push_back(dir / "loop.json");
  return out;
}

TaskOutput run_sweep(const ExperimentConfig& c, const std::filesystem::path& dir, std::size_t workers,
                     std::vector<std::filesystem::path>& files) {
  std::size_t points = 1;
  for (const auto& [name, values] : c.sweep.axes) points *= values.size();

  std::vector<std::string> header;
  for (const auto& [name, values] : c.sweep.axes) header.push_back(name);
  for (const char* col : {"tau_relax", "v", "D", "early_dx_exponent", "early_sigma_exponent",
                          "late_dx_exponent", "late_sigma_exponent", "final_X"})
    header.emplace_back(col);
  files.push_back(dir / "sweep.csv");
  CsvWriter csv(files.back(), header);

  TaskOutput out;
  out.summary["points"] = points;
  ojson point_seeds = ojson::array();
  for (std::size_t p = 0; p < points; ++p) {
    ojson raw = c.raw;
    raw["task"] = "simulate";
    raw.erase("sweep");
    std::vector<std::string> cells;
    std::size_t rest = p;
    // Last axis varies fastest.
    std::vector<double> values(c.sweep.axes.size());
    for (std::size_t a = c.sweep.axes.size(); a-- > 0;) {
      const auto& axis_values = c.sweep.axes[a].second;
      values[a] = axis_values[rest % axis_values.size()];
      rest /= axis_values.size();
    }
    for (std::size_t a = 0; a < values.size(); ++a) {
      const double v = values[a];
      const ojson node = (v == std::floor(v) && std::abs(v) < 9e15) ? ojson(static_cast<long long>(v)) : ojson(v);
      raw[ojson::json_pointer(axis_pointer(c.sweep.axes[a].first, raw))] = node;
      cells.push_back(format_number(v));
    }
    const auto point = parse_config(raw);
    const auto result = run_ensemble(ensemble_spec(point, true), workers);
    const auto s = summarize(result, point);
    for (double v : {opt(s.tau_relax), s.transport ? s.transport->v : std::nan(""),
                     s.transport ? s.transport->D : std::nan(""), opt(s.early_dx_exponent),
                     opt(s.early_sigma_exponent), opt(s.late_dx_exponent), opt(s.late_sigma_exponent),
                     s.final_X})
      cells.push_back(format_number(v));
    csv.row_strings(cells);
    point_seeds.push_back(result.realization_seeds);
  }
  out.summary["realization_seeds_per_point"] = std::move(point_seeds);
  return out;
}

}  // namespace

SimulationSummary summarize(const EnsembleResult& result, const ExperimentConfig& config) {
  const auto& m = result.mean;
  const std::size_t cells = cell_count(config.model);
  SimulationSummary s;
  s.tau_relax = relaxation_time(m, cells, config.run.threshold);
  try {
    s.transport = fit_drift_diffusion(m, cells);
  } catch (const FitError&) {
  }
  auto exponent = [&](const std::optional<std::pair<double, double>>& w, const std::vector<double>& y,
                      std::optional<double>& target) {
    if (!w) return;
    try {
      target = fit_scaling_exponent(m.times, y, w->first, w->second);
    } catch (const FitError&) {
    }
  };
  exponent(config.run.early_window, m.dX, s.early_dx_exponent);
  exponent(config.run.early_window, m.Sigma, s.early_sigma_exponent);
  exponent(config.run.late_window, m.dX, s.late_dx_exponent);
  exponent(config.run.late_window, m.Sigma, s.late_sigma_exponent);
  s.final_X = m.X.empty() ? 0.0 : m.X.back();
  if (!result.profiles.empty()) {
    const auto& last = result.profiles.back();
    s.final_argmax = static_cast<std::size_t>(std::max_element(last.begin(), last.end()) - last.begin()) + 1;
  }
  return s;
}

RunReport run(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::size_t workers) {
  std::filesystem::create_directories(out_dir);
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  TaskOutput task;
  if (config.task == "simulate") task = run_simulate(config, out_dir, workers, report.files);
  else if (config.task == "spectrum") task = run_spectrum(config, out_dir, report.files);
  else if (config.task == "bott") task = run_bott(config, out_dir, workers, report.files);
  else if (config.task == "kernel") task = run_kernel(config, out_dir, workers, report.files);
  else if (config.task == "master") task = run_master(config, out_dir, report.files);
  else if (config.task == "sweep") task = run_sweep(config, out_dir, workers, report.files);
  else throw ParameterError("unknown task " + config.task);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  report.summary = task.summary;
  write_json(out_dir / "summary.json", report.summary);
  report.files.push_back(out_dir / "summary.json");

  ojson manifest;
  manifest["library"] = "qpskin";
  manifest["version"] = QPSKIN_VERSION;
  manifest["task"] = config.task;
  manifest["config"] = config.raw;
  manifest["master_seed"] = config.run.master_seed;
  manifest["seed_derivation"] =
      "realization r uses seed splitmix-derived from (master_seed, r); site j of that realization "
      "draws from the stream derived from (realization seed, 0, j)";
  manifest["realization_seeds"] = task.seeds;
  manifest["workers"] = workers;
  manifest["wall_time_seconds"] = wall;
  ojson names = ojson::array();
  for (const auto& f : report.files) names.push_back(f.filename().string());
  manifest["files"] = names;
  write_json(out_dir / "manifest.json", manifest);
  report.files.push_back(out_dir / "manifest.json");
  return report;
}

}  // namespace qpskin
