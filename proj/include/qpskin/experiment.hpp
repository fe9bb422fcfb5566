#pragma once

// Experiment orchestration: configuration, ensemble execution and output.
//
// A run is fully determined by its JSON configuration plus the master seed.
// Realization r draws its noise from realization_seed(master_seed, r); worker
// threads only change who computes a realization, never its inputs, and all
// reductions run in realization order.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qpskin/dynamics.hpp"
#include "qpskin/kernel.hpp"
#include "qpskin/master.hpp"
#include "qpskin/model.hpp"
#include "qpskin/noise.hpp"
#include "qpskin/observables.hpp"

namespace qpskin {

using Model = std::variant<LatticeModel, GainLossModel>;

// Noise sites and position labels: L for the chain, N cells for gain/loss.
std::size_t cell_count(const Model& model);
std::size_t orbitals(const Model& model);
CMatrix build_hamiltonian(const Model& model);

std::uint64_t realization_seed(std::uint64_t master_seed, std::size_t realization);

// Runs fn(i) for i in [0, n) on up to `workers` threads.  The first exception
// (lowest index) is rethrown after all threads join.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct EnsembleSpec {
  Model model = LatticeModel{};
  NoiseSpec noise;
  InitialSpec initial;
  double dt = 0.005;
  double t_final = 10.0;
  std::vector<std::size_t> output_steps;  // empty: every step
  std::size_t ensemble_size = 1;
  std::uint64_t master_seed = 1;
  bool record_profiles = false;  // ensemble-mean |psi|^2 per cell at each output
  bool keep_members = false;
};

struct EnsembleResult {
  ObservableSeries mean;
  std::vector<ObservableSeries> members;       // only with keep_members
  std::vector<std::vector<double>> profiles;   // [output][cell], only with record_profiles
  std::vector<std::uint64_t> realization_seeds;
};

EnsembleResult run_ensemble(const EnsembleSpec& spec, std::size_t workers = 1);

struct RunSettings {
  double dt = 0.005;
  double t_final = 200.0;
  std::size_t output_stride = 20;
  std::size_t log_per_decade = 0;  // extra log-spaced outputs, 0 = none
  std::size_t ensemble_size = 1;
  std::uint64_t master_seed = 1;
  bool record_profiles = true;
  double threshold = 0.8;  // tau_relax: first time X >= threshold * L
  std::optional<std::pair<double, double>> early_window;
  std::optional<std::pair<double, double>> late_window;
};

struct SpectrumSettings {
  std::size_t r1 = 1;
  std::size_t r2 = 0;  // 0 = last cell
  double lambda = 10.0;
};

struct BottSettings {
  std::size_t re_points = 21;
  std::size_t im_points = 21;
  Boundary boundary = Boundary::PBC;
  double padding = 0.1;  // fraction of the largest bounding-box side added on each side
  std::optional<std::array<double, 4>> box;  // re_min, re_max, im_min, im_max
};

struct KernelSettings {
  std::size_t j = 50;
  std::vector<double> sigmas;
  double t = KernelQuery::stationary;
};

struct MasterSettings {
  KernelMode mode = KernelMode::Averaged;
  double dt = 0.01;
  double t_final = 0.0;  // > 0 also evolves from a delta start
  std::size_t output_stride = 100;
  std::optional<std::size_t> start_site;  // default ceil(L/2)
};

struct SweepSettings {
  std::vector<std::pair<std::string, std::vector<double>>> axes;
};

struct ExperimentConfig {
  std::string task = "simulate";
  Model model = LatticeModel{};
  NoiseSpec noise;
  InitialSpec initial;
  RunSettings run;
  SpectrumSettings spectrum;
  BottSettings bott;
  KernelSettings kernel;
  MasterSettings master;
  SweepSettings sweep;
  nlohmann::ordered_json raw;
};

inline const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"simulate", "spectrum", "bott", "kernel", "master", "sweep"};
  return names;
}

// Collects every violated constraint and throws one ParameterError listing them.
ExperimentConfig parse_config(const nlohmann::ordered_json& raw);
ExperimentConfig load_config(const std::filesystem::path& path);

// JSON pointer that a sweep axis name refers to ("W" -> "/model/W", a name
// starting with '/' is used verbatim).
std::string axis_pointer(const std::string& axis, const nlohmann::ordered_json& raw);

struct SimulationSummary {
  std::optional<double> tau_relax;
  std::optional<DriftDiffusionFit> transport;
  std::optional<double> early_dx_exponent, early_sigma_exponent;
  std::optional<double> late_dx_exponent, late_sigma_exponent;
  double final_X = 0.0;
  std::size_t final_argmax = 0;  // cell with the largest final ensemble-mean weight (1-based)
};

SimulationSummary summarize(const EnsembleResult& result, const ExperimentConfig& config);

struct RunReport {
  std::vector<std::filesystem::path> files;
  nlohmann::ordered_json summary;
};

// Executes config.task, writing CSV/JSON files and manifest.json into out_dir.
RunReport run(const ExperimentConfig& config, const std::filesystem::path& out_dir,
              std::size_t workers = 1);

// Locale-independent shortest round-trip formatting for CSV cells.
std::string format_number(double value);

}  // namespace qpskin
