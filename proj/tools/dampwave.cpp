// dampwave: command-line front end for the experiment layer.
//
//   dampwave <command> [--config PATH] [--out DIR] [--jobs N]
//                      [--override key=value]...
//
// Exit codes: 0 done (blow-up included), 2 configuration error,
// 3 numerical instability.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dampwave/experiment.hpp"

int main(int argc, char** argv) {
  namespace lab = dampwave::lab;
  CLI::App app{"Numerical lab for u_tt - Δu + μ/(1+t) u_t = |u|^p"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = ".";
  int jobs = 1;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--out", out_dir, "Directory for CSV and JSON outputs");
  app.add_option("--jobs", jobs, "Concurrent runs for sweeps")->check(CLI::PositiveNumber);
  app.add_option("--override", overrides, "Set a config key, e.g. model.mu=50")
      ->allow_extra_args(false)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  const std::vector<std::pair<std::string, std::string>> subs{
      {"run", "Single simulation: time-series CSV and JSON summary"},
      {"sweep-p", "Blow-up/global classification over sweep.p_list"},
      {"sweep-mu", "Blow-up/global classification over sweep.mu_list"},
      {"feasibility", "Constructive mu0(eps) table and log-log slope"},
      {"diffusion", "Shape gap between the damped wave and its heat reference"},
      {"testfn", "Test-function identity I_R = B + J1 + J2 + J3"},
      {"convergence", "Manufactured-solution order study"},
  };
  for (const auto& [name, help] : subs) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return lab::exit_config;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  lab::ExperimentConfig config;
  try {
    std::optional<std::filesystem::path> path;
    if (!config_path.empty()) path = config_path;
    config = lab::load_config(path, overrides);
  } catch (const dampwave::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return lab::exit_config;
  }

  lab::Context ctx;
  ctx.out_dir = out_dir;
  ctx.jobs = jobs;
  ctx.log = &std::cout;
  return lab::execute(command, config, ctx, std::cerr);
}
