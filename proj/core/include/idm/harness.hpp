#pragma once

#include <iosfwd>

#include "idm/metrics.hpp"

namespace idm::harness {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Experiment grid description, loaded from a versioned JSON config.
struct ExperimentConfig {
  std::string experiment;  // complexity_pos | complexity_img | goal |
                           // stochasticity | entropy_gap | lapo_compare |
                           // verify_tabular
  std::vector<int> maze_sizes = {10, 20};
  uint64_t env_seed = 7;
  std::vector<std::string> methods;
  std::vector<double> splits = {0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0};
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<double> p_rights = {0.5, 0.7, 0.9};
  int num_goals = 10;
  int labeled_size = 16;   // lapo_compare
  int trials = 100;        // verify_tabular
  int max_epochs = 20000;
  int stochastic_max_epochs = 3000;
  std::string out_dir = ".";

  void validate() const;
  static ExperimentConfig from_json(const std::string& text,
                                    const std::string& base_dir);
  static ExperimentConfig from_file(const std::string& path);
};

struct ResultRow {
  std::string experiment;  // experiment id, environment folded in after '/'
  std::string method;
  std::string arch;
  double split_fraction = 1.0;
  uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
  int epochs_run = 0;
  double wall_time = 0.0;  // measured; zeroed in deterministic CSV output
};

// Runs the full method x split x seed grid. Cells execute on `jobs` worker
// threads; row order is independent of scheduling.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, int jobs = 1,
                                      uint64_t seed_offset = 0);

void write_csv(std::ostream& os, const std::vector<ResultRow>& rows,
               bool deterministic = true);
std::vector<ResultRow> read_csv(std::istream& is);

// One SVG per experiment/metric pair: x = split (log scale when geometric),
// y = metric, one series per method with a std band. Returns files written.
std::vector<std::string> emit_plots(const std::vector<ResultRow>& rows,
                                    const std::string& out_dir);

// Tabular verification suite; writes one line per trial, returns the number
// of failed trials.
int run_verify(std::ostream& report, int trials = 100, uint64_t seed = 2024);

// Analytic-IDM exactness check for `oracle <grid-size>`.
struct OracleReport {
  double pos_accuracy = 0.0;
  double img_accuracy = 0.0;
  int transitions = 0;
};
OracleReport run_oracle(int grid_size, uint64_t seed);

}  // namespace idm::harness
