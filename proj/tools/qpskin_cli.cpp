// Command-line front end: one subcommand per task.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "qpskin/errors.hpp"
#include "qpskin/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;
  std::string out = "out";
};

int execute(const std::string& task, const Options& opt) {
  std::ifstream in(opt.config);
  if (!in) throw qpskin::ParameterError("cannot open config file " + opt.config);
  nlohmann::ordered_json raw;
  try {
    raw = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw qpskin::ParameterError("config file " + opt.config + " is not valid JSON: " + e.what());
  }
  if (raw.contains("task") && raw["task"] != task)
    throw qpskin::ParameterError("config task \"" + raw["task"].dump() + "\" does not match subcommand " + task);
  raw["task"] = task;
  if (opt.seed) raw["run"]["master_seed"] = *opt.seed;

  const auto config = qpskin::parse_config(raw);
  const std::size_t workers =
      opt.workers > 0 ? opt.workers : std::max(1u, std::thread::hardware_concurrency());
  const auto report = qpskin::run(config, opt.out, workers);
  std::cout << report.summary.dump(2) << '\n';
  for (const auto& f : report.files) std::cerr << "wrote " << f.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-restored dynamical skin effect toolkit"};
  app.require_subcommand(1);
  Options opt;

  for (const auto& task : qpskin::task_names()) {
    auto* sub = app.add_subcommand(task, "run the " + task + " task");
    sub->add_option("--config", opt.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { opt.seed = s; },
                                            "override run.master_seed");
    sub->add_option("--workers", opt.workers, "worker threads (default: hardware concurrency)");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
  }

  CLI11_PARSE(app, argc, argv);
  const std::string task = app.get_subcommands().front()->get_name();
  try {
    return execute(task, opt);
  } catch (const qpskin::ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
