#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "idm/harness.hpp"

namespace fs = std::filesystem;
using namespace idm;

int main(int argc, char** argv) {
  CLI::App app{"gridworld imitation-learning lab"};
  app.require_subcommand(1);
  app.fallthrough();

  uint64_t seed_offset = 0;
  int jobs = 1;
  std::string out;
  app.add_option("--seed-offset", seed_offset,
                 "offset added to every configured seed");
  app.add_option("--jobs", jobs, "worker threads for experiment cells");
  app.add_option("--out", out, "output directory (overrides config)");

  std::string config_path;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "JSON experiment config")
      ->required()
      ->check(CLI::ExistingFile);

  auto* verify = app.add_subcommand("verify", "tabular identity suite");
  int trials = 100;
  uint64_t verify_seed = 2024;
  verify->add_option("--trials", trials, "number of random MDP trials");
  verify->add_option("--seed", verify_seed, "RNG seed");

  std::string csv_path;
  auto* plot = app.add_subcommand("plot", "render SVG plots from a result CSV");
  plot->add_option("csv", csv_path, "result CSV")
      ->required()
      ->check(CLI::ExistingFile);

  int grid_size = 10;
  uint64_t oracle_seed = 1;
  auto* oracle =
      app.add_subcommand("oracle", "analytic-IDM accuracy on a random maze");
  oracle->add_option("grid-size", grid_size, "maze side length")->required();
  oracle->add_option("--seed", oracle_seed, "maze seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = harness::ExperimentConfig::from_file(config_path);
      if (!out.empty()) cfg.out_dir = out;
      auto rows = harness::run_experiment(cfg, jobs, seed_offset);
      fs::create_directories(cfg.out_dir);
      fs::path csv = fs::path(cfg.out_dir) / (cfg.experiment + ".csv");
      std::ofstream f(csv, std::ios::binary);
      harness::write_csv(f, rows);
      std::cout << "wrote " << rows.size() << " rows to " << csv.string()
                << "\n";
      for (const auto& p : harness::emit_plots(rows, cfg.out_dir))
        std::cout << "wrote " << p << "\n";
      return 0;
    }
    if (*verify) {
      int failures = harness::run_verify(std::cout, trials, verify_seed);
      return failures == 0 ? 0 : 1;
    }
    if (*plot) {
      std::ifstream f(csv_path);
      auto rows = harness::read_csv(f);
      std::string dir = out.empty() ? "." : out;
      for (const auto& p : harness::emit_plots(rows, dir))
        std::cout << "wrote " << p << "\n";
      return 0;
    }
    if (*oracle) {
      auto r = harness::run_oracle(grid_size, oracle_seed + seed_offset);
      std::cout << "transitions: " << r.transitions << "\n"
                << "pos_idm_accuracy: " << r.pos_accuracy << "\n"
                << "img_idm_accuracy: " << r.img_accuracy << "\n";
      return (r.pos_accuracy == 1.0 && r.img_accuracy == 1.0) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
