#include "idm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "idm/latent.hpp"
#include "idm/verifier.hpp"
#include "json.hpp"

namespace idm::harness {

using data::Transition;
using grid::Grid;
using grid::PosState;
using json = nlohmann::json;

namespace {

constexpr const char* kExperiments[] = {
    "complexity_pos", "complexity_img", "goal",          "stochasticity",
    "entropy_gap",    "lapo_compare",   "verify_tabular"};

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::vector<std::string> default_methods(const std::string& experiment) {
  if (experiment == "complexity_pos")
    return {"BC-LC", "BC-MLP5", "VMIDM-LC", "VMIDM-MLP5"};
  if (experiment == "complexity_img") return {"BC-CNN5", "VMIDM-CNN1"};
  if (experiment == "goal") return {"BC", "BC_G", "VMIDM", "VMIDM_G"};
  if (experiment == "stochasticity") return {"BC", "IDMLABEL"};
  if (experiment == "entropy_gap") return {"BC", "IDM"};
  if (experiment == "lapo_compare") return {"LAPO", "LAPO_PLUS"};
  return {};
}

struct MethodSpec {
  bool is_bc = false;        // else IDM-based
  models::ArchKind kind = models::ArchKind::LC;
  bool goal_conditioned = false;
};

MethodSpec parse_complexity_method(const std::string& m) {
  MethodSpec out;
  std::string rest;
  if (m.rfind("BC-", 0) == 0) {
    out.is_bc = true;
    rest = m.substr(3);
  } else if (m.rfind("VMIDM-", 0) == 0) {
    rest = m.substr(6);
  } else {
    throw ConfigError("unknown method: " + m);
  }
  if (rest == "LC")
    out.kind = models::ArchKind::LC;
  else if (rest == "MLP5")
    out.kind = models::ArchKind::MLP5;
  else if (rest == "CNN1")
    out.kind = models::ArchKind::CNN1;
  else if (rest == "CNN5")
    out.kind = models::ArchKind::CNN5;
  else
    throw ConfigError("unknown architecture in method: " + m);
  return out;
}

double arch_lr(models::ArchKind k) {
  return (k == models::ArchKind::CNN1 || k == models::ArchKind::CNN5) ? 1e-4
                                                                      : 1e-3;
}

learn::BatchRule arch_batch_rule(models::ArchKind k) {
  return (k == models::ArchKind::CNN1 || k == models::ArchKind::CNN5)
             ? learn::BatchRule::Min32
             : learn::BatchRule::Full;
}

std::vector<Transition> holdout_of(const std::vector<Transition>& full,
                                   const std::vector<Transition>& labeled) {
  std::set<std::pair<PosState, std::optional<PosState>>> seen;
  for (const auto& t : labeled) seen.insert({t.s, t.goal});
  std::vector<Transition> out;
  for (const auto& t : full)
    if (!seen.count({t.s, t.goal})) out.push_back(t);
  return out;
}

struct Cell {
  std::string experiment;  // with environment suffix
  std::string method;
  double split = 1.0;
  uint64_t seed = 0;
};

void push_row(std::vector<ResultRow>& rows, const Cell& c,
              const std::string& arch, const std::string& metric, double value,
              int epochs, double wall) {
  rows.push_back({c.experiment, c.method, arch, c.split, c.seed, metric, value,
                  epochs, wall});
}

std::vector<ResultRow> run_complexity_cell(const ExperimentConfig& cfg,
                                           const Cell& c, const Grid& g,
                                           const std::vector<Transition>& full,
                                           models::StateFormat format) {
  auto t0 = std::chrono::steady_clock::now();
  MethodSpec ms = parse_complexity_method(c.method);
  auto split = data::sample_train_split(full, c.split, c.seed);

  learn::TrainConfig tc;
  tc.lr = arch_lr(ms.kind);
  tc.batch_rule = arch_batch_rule(ms.kind);
  tc.max_epochs = cfg.max_epochs;
  tc.seed = c.seed ^ fnv1a(c.method);

  std::vector<ResultRow> rows;
  PolicyFn policy;
  int epochs = 0;
  learn::TrainResult tr;
  learn::ComposedPolicy composed;
  if (ms.is_bc) {
    models::ArchSpec spec{ms.kind, models::Role::Policy, format, false};
    tr = learn::train_bc(g, split.labeled, spec, tc);
    policy = policy_fn_of(tr.model, g);
  } else {
    models::ArchSpec spec{ms.kind, models::Role::Idm, format, false};
    tr = learn::train_idm(g, split.labeled, spec, tc);
    composed = {&g, learn::ground_truth_vm_fn(g), &tr.model};
    policy = policy_fn_of(composed);
  }
  epochs = tr.epochs_run;

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  const char* arch = models::arch_name(ms.kind);
  push_row(rows, c, arch, "test_accuracy", metric_accuracy(policy, full),
           epochs, wall);
  auto held = holdout_of(full, split.labeled);
  if (!held.empty())
    push_row(rows, c, arch, "holdout_accuracy", metric_accuracy(policy, held),
             epochs, wall);
  return rows;
}

std::vector<ResultRow> run_goal_cell(const ExperimentConfig& cfg, const Cell& c,
                                     const Grid& g,
                                     const std::vector<Transition>& full) {
  auto t0 = std::chrono::steady_clock::now();
  bool conditioned = c.method == "BC_G" || c.method == "VMIDM_G";
  bool is_bc = c.method == "BC" || c.method == "BC_G";
  if (!is_bc && c.method != "VMIDM" && c.method != "VMIDM_G")
    throw ConfigError("unknown method: " + c.method);
  auto split = data::sample_train_split(full, c.split, c.seed);

  learn::TrainConfig tc;
  tc.max_epochs = cfg.max_epochs;
  tc.seed = c.seed ^ fnv1a(c.method);

  std::vector<ResultRow> rows;
  PolicyFn policy;
  learn::TrainResult tr;
  learn::ComposedPolicy composed;
  if (is_bc) {
    models::ArchSpec spec{models::ArchKind::MLP5, models::Role::Policy,
                          models::StateFormat::Pos, conditioned};
    tr = learn::train_bc(g, split.labeled, spec, tc);
    policy = policy_fn_of(tr.model, g);
  } else {
    models::ArchSpec spec{models::ArchKind::MLP5, models::Role::Idm,
                          models::StateFormat::Pos, conditioned};
    tr = learn::train_idm(g, split.labeled, spec, tc);
    composed = {&g, learn::goal_conditioned_vm_fn(g), &tr.model};
    policy = policy_fn_of(composed);
  }

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  push_row(rows, c, "MLP5", "test_accuracy", metric_accuracy(policy, full),
           tr.epochs_run, wall);
  return rows;
}

std::vector<Transition> trajectory_pool(const Grid& g,
                                        const grid::StochasticDiagonal& expert,
                                        int trajectories, int horizon,
                                        uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Transition> out;
  for (int i = 0; i < trajectories; ++i)
    for (const auto& r : grid::sample_trajectory(g, expert, horizon, rng))
      out.push_back(data::labeled(r.s, r.a, r.s_next));
  return out;
}

std::vector<ResultRow> run_stochasticity_cell(
    const ExperimentConfig& cfg, const Cell& c, const Grid& g, double p_right,
    const std::vector<Transition>& pool) {
  auto t0 = std::chrono::steady_clock::now();
  auto split = data::sample_train_split(pool, c.split, c.seed);

  learn::TrainConfig tc;
  tc.batch_rule = learn::BatchRule::Min512;
  tc.max_epochs = cfg.stochastic_max_epochs;
  tc.early_stop_loss = 0.0;  // the loss floor is the expert entropy
  tc.seed = c.seed ^ fnv1a(c.method) ^ fnv1a(fmt6(p_right));

  models::ArchSpec policy_spec{models::ArchKind::MLP5, models::Role::Policy,
                               models::StateFormat::Pos, false};
  std::vector<ResultRow> rows;
  PolicyFn policy;
  int epochs = 0;
  learn::TrainResult bc;
  learn::IdmLabelingResult lab;
  if (c.method == "BC") {
    bc = learn::train_bc(g, split.labeled, policy_spec, tc);
    policy = policy_fn_of(bc.model, g);
    epochs = bc.epochs_run;
  } else if (c.method == "IDMLABEL") {
    models::ArchSpec idm_spec{models::ArchKind::MLP5, models::Role::Idm,
                              models::StateFormat::Pos, false};
    lab = learn::train_idm_labeling(g, split.labeled, split.unlabeled, idm_spec,
                                    policy_spec, tc, tc);
    policy = policy_fn_of(lab.policy.model, g);
    epochs = lab.policy.epochs_run;
  } else {
    throw ConfigError("unknown method: " + c.method);
  }

  std::mt19937_64 reward_rng(c.seed ^ 0x5eedbeef12345678ull);
  double reward = metric_reward(policy, g, 25, 2 * (g.width - 1), reward_rng);
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  push_row(rows, c, "MLP5", "avg_reward", reward, epochs, wall);
  push_row(rows, c, "MLP5", "test_nll", metric_nll(policy, pool), epochs, wall);
  return rows;
}

std::vector<ResultRow> run_entropy_cell(const ExperimentConfig& cfg,
                                        const Cell& c, const Grid& g,
                                        const std::vector<Transition>& pool) {
  auto t0 = std::chrono::steady_clock::now();
  auto split = data::sample_train_split(pool, c.split, c.seed);

  learn::TrainConfig tc;
  tc.batch_rule = learn::BatchRule::Min512;
  tc.max_epochs = cfg.stochastic_max_epochs;
  tc.early_stop_loss = 0.0;
  tc.seed = c.seed ^ fnv1a(c.method);

  std::vector<ResultRow> rows;
  if (c.method == "BC") {
    models::ArchSpec spec{models::ArchKind::MLP5, models::Role::Policy,
                          models::StateFormat::Pos, false};
    auto tr = learn::train_bc(g, split.labeled, spec, tc);
    auto policy = policy_fn_of(tr.model, g);
    double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    push_row(rows, c, "MLP5", "entropy", metric_entropy(policy, pool),
             tr.epochs_run, wall);
    push_row(rows, c, "MLP5", "test_nll", metric_nll(policy, pool),
             tr.epochs_run, wall);
  } else if (c.method == "IDM") {
    models::ArchSpec spec{models::ArchKind::MLP5, models::Role::Idm,
                          models::StateFormat::Pos, false};
    auto tr = learn::train_idm(g, split.labeled, spec, tc);
    auto idm = idm_fn_of(tr.model, g);
    double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    push_row(rows, c, "MLP5", "entropy", metric_idm_entropy(idm, pool),
             tr.epochs_run, wall);
  } else {
    throw ConfigError("unknown method: " + c.method);
  }
  return rows;
}

latent::LatentStack pretrain_lapo_stack(const ExperimentConfig& cfg,
                                        const Grid& g,
                                        const std::vector<Transition>& full) {
  // Stage-1 pretraining corpus: every unblocked action from every visited
  // state, so the next frame is not predictable from the current one alone.
  std::vector<Transition> pretrain;
  for (const auto& t : full)
    for (int a = 0; a < grid::kNumActions; ++a) {
      PosState next = grid::step(g, t.s, static_cast<grid::Action>(a));
      if (!(next == t.s))
        pretrain.push_back(data::strip_action({t.s, a, next, {}}));
    }
  latent::LatentConfig lc;
  lc.seed = cfg.env_seed ^ fnv1a("lapo_stack");
  auto stack = latent::make_stack(g, lc);
  latent::lapo_stage1(stack, g, pretrain);
  return stack;
}

std::vector<ResultRow> run_lapo_cell(const ExperimentConfig& cfg, const Cell& c,
                                     const Grid& g,
                                     const std::vector<Transition>& full,
                                     const latent::LatentStack& pretrained) {
  auto t0 = std::chrono::steady_clock::now();
  double fraction =
      static_cast<double>(cfg.labeled_size) / static_cast<double>(full.size());
  auto split = data::sample_train_split(full, fraction, c.seed);

  latent::LatentStack stack = pretrained;  // frozen stage 1, copied per cell
  stack.cfg.seed = c.seed;

  std::vector<ResultRow> rows;
  double acc = 0.0;
  if (c.method == "LAPO") {
    latent::lapo_stage2_policy(stack, g, split.unlabeled);
    latent::lapo_stage3_decode_policy(stack, g, split.labeled);
    PolicyFn policy = [&](PosState s, std::optional<PosState>) {
      return latent::lapo_policy_distribution(stack, g, s);
    };
    acc = metric_accuracy(policy, full);
  } else if (c.method == "LAPO_PLUS") {
    latent::lapo_plus_stage2_decode_idm(stack, g, split.labeled);
    auto img_policy = latent::lapo_plus_stage3_label(stack, g, split.unlabeled);
    PolicyFn policy = [&](PosState s, std::optional<PosState>) {
      return img_policy.distribution(g, s);
    };
    acc = metric_accuracy(policy, full);
  } else {
    throw ConfigError("unknown method: " + c.method);
  }

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  push_row(rows, c, "CNN", "test_accuracy", acc, 0, wall);
  return rows;
}

struct VerifyTrial {
  double kl_residual = 0.0;
  bool inequality = false;
  bool infinite = false;
  double compose_residual = 0.0;
  double equiv_residual = 0.0;
  bool pass = false;
};

VerifyTrial verify_trial(std::mt19937_64& rng, bool sparse) {
  std::uniform_int_distribution<int> ns(2, 6), na(2, 3), nt(1, 5);
  int S = ns(rng), A = na(rng), T = nt(rng);
  auto mdp = tab::random_mdp(S, A, T, rng, sparse);
  auto pi = tab::random_policy(S, A, rng);
  auto h_hat = tab::random_idm(S, A, rng);

  VerifyTrial out;
  auto kl = tab::check_kl_decomposition(mdp, pi, h_hat);
  out.kl_residual = kl.equality_residual;
  out.inequality = kl.inequality_holds;
  out.infinite = kl.infinite;

  auto [h_star, v_star] = tab::induced_idm_vm(mdp, pi);
  auto composed = tab::compose(v_star, h_star);
  auto vis = tab::visitation(mdp, pi);
  for (int s = 0; s < S; ++s) {
    if (vis.state[s] <= 0.0) continue;
    for (int a = 0; a < A; ++a)
      out.compose_residual = std::max(
          out.compose_residual, std::abs(composed.at(s, a) - pi.at(s, a)));
  }

  out.equiv_residual = tab::check_equivalence(mdp, pi, h_hat).max_residual;
  out.pass = !out.infinite && out.kl_residual < 1e-10 && out.inequality &&
             out.compose_residual < 1e-12 && out.equiv_residual < 1e-12;
  return out;
}

class Pool {
 public:
  using Job = std::function<std::vector<ResultRow>()>;

  static std::vector<ResultRow> run(std::vector<Job> jobs, int workers) {
    std::vector<std::vector<ResultRow>> results(jobs.size());
    std::atomic<size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        try {
          results[i] = jobs[i]();
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    };
    workers = std::max(1, std::min<int>(workers, jobs.size()));
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (err) std::rethrow_exception(err);
    std::vector<ResultRow> rows;
    for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
    return rows;
  }
};

}  // namespace

void ExperimentConfig::validate() const {
  bool known = false;
  for (const char* e : kExperiments) known |= experiment == e;
  if (!known) throw ConfigError("unknown experiment id: " + experiment);
  if (seeds.empty()) throw ConfigError("seeds list is empty");
  if (methods.empty() && experiment != "verify_tabular")
    throw ConfigError("method list is empty for " + experiment);
  if (splits.empty()) throw ConfigError("split grid is empty");
  for (double f : splits)
    if (!(f > 0.0 && f <= 1.0))
      throw ConfigError("split fractions must lie in (0,1]");
  if (experiment == "complexity_pos" || experiment == "complexity_img") {
    auto fmt_want = experiment == "complexity_pos" ? models::StateFormat::Pos
                                                   : models::StateFormat::Img;
    for (const auto& m : methods) {
      MethodSpec ms = parse_complexity_method(m);
      models::ArchSpec spec{ms.kind,
                            ms.is_bc ? models::Role::Policy : models::Role::Idm,
                            fmt_want, false};
      try {
        spec.validate();
      } catch (const models::SpecError& e) {
        throw ConfigError("method " + m + " is not valid for " + experiment +
                          ": " + e.what());
      }
    }
    if (maze_sizes.empty()) throw ConfigError("maze size list is empty");
  } else {
    auto defaults = default_methods(experiment);
    for (const auto& m : methods)
      if (std::find(defaults.begin(), defaults.end(), m) == defaults.end())
        throw ConfigError("method " + m + " is not valid for " + experiment);
  }
  if (num_goals < 1) throw ConfigError("num_goals must be positive");
  if (labeled_size < 1) throw ConfigError("labeled_size must be positive");
  if (trials < 1) throw ConfigError("trials must be positive");
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text,
                                             const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw ConfigError("config must declare version 1");
  if (!j.contains("experiment"))
    throw ConfigError("config missing experiment id");
  ExperimentConfig cfg;
  cfg.experiment = j["experiment"].get<std::string>();
  if (j.contains("maze_sizes"))
    cfg.maze_sizes = j["maze_sizes"].get<std::vector<int>>();
  if (j.contains("env_seed")) cfg.env_seed = j["env_seed"].get<uint64_t>();
  if (j.contains("methods"))
    cfg.methods = j["methods"].get<std::vector<std::string>>();
  else
    cfg.methods = default_methods(cfg.experiment);
  if (j.contains("splits")) cfg.splits = j["splits"].get<std::vector<double>>();
  if (j.contains("seeds"))
    cfg.seeds = j["seeds"].get<std::vector<uint64_t>>();
  if (j.contains("p_rights"))
    cfg.p_rights = j["p_rights"].get<std::vector<double>>();
  if (j.contains("num_goals")) cfg.num_goals = j["num_goals"].get<int>();
  if (j.contains("labeled_size"))
    cfg.labeled_size = j["labeled_size"].get<int>();
  if (j.contains("trials")) cfg.trials = j["trials"].get<int>();
  if (j.contains("max_epochs")) cfg.max_epochs = j["max_epochs"].get<int>();
  if (j.contains("stochastic_max_epochs"))
    cfg.stochastic_max_epochs = j["stochastic_max_epochs"].get<int>();
  if (j.contains("out_dir")) {
    std::filesystem::path p = j["out_dir"].get<std::string>();
    cfg.out_dir =
        p.is_absolute() ? p.string() : (std::filesystem::path(base_dir) / p)
                                           .lexically_normal()
                                           .string();
  } else {
    cfg.out_dir = base_dir.empty() ? "." : base_dir;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  std::string base = std::filesystem::path(path).parent_path().string();
  return from_json(ss.str(), base);
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, int jobs,
                                      uint64_t seed_offset) {
  cfg.validate();
  std::vector<Pool::Job> work;
  const auto& methods = cfg.methods;

  if (cfg.experiment == "complexity_pos" ||
      cfg.experiment == "complexity_img") {
    auto format = cfg.experiment == "complexity_pos" ? models::StateFormat::Pos
                                                     : models::StateFormat::Img;
    // one environment per maze size, shared across all cells
    auto envs = std::make_shared<
        std::map<int, std::pair<Grid, std::vector<Transition>>>>();
    for (int size : cfg.maze_sizes) {
      Grid g = grid::generate_maze(size, cfg.env_seed + size);
      auto e = grid::solve_expert(g);
      envs->emplace(size, std::make_pair(g, data::build_test_set(g, e)));
    }
    for (int size : cfg.maze_sizes)
      for (const auto& m : methods)
        for (double split : cfg.splits)
          for (uint64_t seed : cfg.seeds) {
            Cell c{cfg.experiment + "/maze" + std::to_string(size), m, split,
                   seed + seed_offset};
            work.push_back([&cfg, c, envs, size, format] {
              const auto& [g, full] = envs->at(size);
              return run_complexity_cell(cfg, c, g, full, format);
            });
          }
  } else if (cfg.experiment == "goal") {
    int size = cfg.maze_sizes.empty() ? 10 : cfg.maze_sizes.front();
    auto g = std::make_shared<Grid>(grid::generate_maze(size, cfg.env_seed));
    auto e = grid::solve_expert(*g);
    auto cells = grid::feasible_states(*g, e);
    std::mt19937_64 goal_rng(cfg.env_seed ^ 0x90a1c0ffee123456ull);
    std::shuffle(cells.begin(), cells.end(), goal_rng);
    if (static_cast<size_t>(cfg.num_goals) > cells.size())
      throw ConfigError("num_goals exceeds feasible cell count");
    std::vector<PosState> goals(cells.begin(), cells.begin() + cfg.num_goals);
    auto full = std::make_shared<std::vector<Transition>>(
        data::build_goal_test_set(*g, goals));
    for (const auto& m : methods)
      for (double split : cfg.splits)
        for (uint64_t seed : cfg.seeds) {
          Cell c{cfg.experiment + "/maze" + std::to_string(size), m, split,
                 seed + seed_offset};
          work.push_back([&cfg, c, g, full] {
            return run_goal_cell(cfg, c, *g, *full);
          });
        }
  } else if (cfg.experiment == "stochasticity") {
    int size = 20;
    auto g = std::make_shared<Grid>(grid::make_open_grid(size));
    for (double p : cfg.p_rights) {
      grid::StochasticDiagonal expert{p};
      auto pool = std::make_shared<std::vector<Transition>>(trajectory_pool(
          *g, expert, 26, 2 * (size - 1), cfg.env_seed ^ fnv1a(fmt6(p))));
      for (const auto& m : methods)
        for (double split : cfg.splits)
          for (uint64_t seed : cfg.seeds) {
            Cell c{cfg.experiment + "/p" + fmt6(p), m, split,
                   seed + seed_offset};
            work.push_back([&cfg, c, g, p, pool] {
              return run_stochasticity_cell(cfg, c, *g, p, *pool);
            });
          }
    }
  } else if (cfg.experiment == "entropy_gap") {
    int size = 20;
    auto g = std::make_shared<Grid>(grid::make_open_grid(size));
    double p = 0.5;
    grid::StochasticDiagonal expert{p};
    auto pool = std::make_shared<std::vector<Transition>>(trajectory_pool(
        *g, expert, 26, 2 * (size - 1), cfg.env_seed ^ fnv1a(fmt6(p))));
    for (const auto& m : methods)
      for (double split : cfg.splits)
        for (uint64_t seed : cfg.seeds) {
          Cell c{cfg.experiment + "/p" + fmt6(p), m, split,
                 seed + seed_offset};
          work.push_back([&cfg, c, g, pool] {
            return run_entropy_cell(cfg, c, *g, *pool);
          });
        }
  } else if (cfg.experiment == "lapo_compare") {
    int size = cfg.maze_sizes.empty() ? 10 : cfg.maze_sizes.front();
    auto g = std::make_shared<Grid>(grid::generate_maze(size, cfg.env_seed));
    auto e = grid::solve_expert(*g);
    auto full = std::make_shared<std::vector<Transition>>(
        data::build_test_set(*g, e));
    // Stage-1 pretraining is shared by every downstream run: one stack per
    // environment, reused across methods and seeds.
    auto stack = std::make_shared<latent::LatentStack>(
        pretrain_lapo_stack(cfg, *g, *full));
    for (const auto& m : methods)
      for (uint64_t seed : cfg.seeds) {
        Cell c{cfg.experiment + "/maze" + std::to_string(size), m, 1.0,
               seed + seed_offset};
        work.push_back([&cfg, c, g, full, stack] {
          return run_lapo_cell(cfg, c, *g, *full, *stack);
        });
      }
  } else {  // verify_tabular
    for (uint64_t seed : cfg.seeds) {
      Cell c{cfg.experiment, "verifier", 1.0, seed + seed_offset};
      int trials = cfg.trials;
      work.push_back([c, trials]() -> std::vector<ResultRow> {
        std::mt19937_64 rng(c.seed);
        int failures = 0;
        double max_kl = 0.0, max_compose = 0.0, max_equiv = 0.0;
        for (int i = 0; i < trials; ++i) {
          auto t = verify_trial(rng, i % 4 == 3);
          if (!t.pass) ++failures;
          if (!t.infinite) max_kl = std::max(max_kl, t.kl_residual);
          max_compose = std::max(max_compose, t.compose_residual);
          max_equiv = std::max(max_equiv, t.equiv_residual);
        }
        std::vector<ResultRow> rows;
        push_row(rows, c, "-", "failed_trials", failures, 0, 0.0);
        push_row(rows, c, "-", "max_kl_residual", max_kl, 0, 0.0);
        push_row(rows, c, "-", "max_compose_residual", max_compose, 0, 0.0);
        push_row(rows, c, "-", "max_equiv_residual", max_equiv, 0, 0.0);
        return rows;
      });
    }
  }

  auto rows = Pool::run(std::move(work), jobs);

  if (cfg.experiment == "entropy_gap") {
    // exact reference entropies of the stochastic expert and its idm table
    Grid g = grid::make_open_grid(20);
    grid::StochasticDiagonal expert{0.5};
    auto e = grid::solve_expert(g);
    double h = 0.0;
    auto cells = grid::feasible_states(g, e);
    for (auto s : cells) {
      for (double p : expert.distribution(g, s))
        if (p > 0.0) h -= p * std::log(p) / cells.size();
    }
    uint64_t seed0 = cfg.seeds.front() + seed_offset;
    rows.push_back({"entropy_gap/p0.5", "EXPERT", "-", 1.0, seed0, "entropy",
                    h, 0, 0.0});
    rows.push_back({"entropy_gap/p0.5", "EXACT_IDM", "-", 1.0, seed0,
                    "entropy", 0.0, 0, 0.0});
  }
  return rows;
}

void write_csv(std::ostream& os, const std::vector<ResultRow>& rows,
               bool deterministic) {
  os << "experiment,method,arch,split_fraction,seed,metric,value,epochs_run,"
        "wall_time\n";
  for (const auto& r : rows) {
    os << r.experiment << ',' << r.method << ',' << r.arch << ','
       << fmt(r.split_fraction) << ',' << r.seed << ',' << r.metric << ','
       << fmt(r.value) << ',' << r.epochs_run << ','
       << fmt(deterministic ? 0.0 : r.wall_time) << '\n';
  }
}

std::vector<ResultRow> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty CSV");
  const std::string header =
      "experiment,method,arch,split_fraction,seed,metric,value,epochs_run,"
      "wall_time";
  if (line != header) throw ConfigError("unexpected CSV header: " + line);
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 9)
      throw ConfigError("malformed CSV row: " + line);
    ResultRow r;
    r.experiment = cols[0];
    r.method = cols[1];
    r.arch = cols[2];
    r.split_fraction = std::stod(cols[3]);
    r.seed = std::stoull(cols[4]);
    r.metric = cols[5];
    r.value = std::stod(cols[6]);
    r.epochs_run = std::stoi(cols[7]);
    r.wall_time = std::stod(cols[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

struct Series {
  std::vector<double> xs;
  std::vector<double> means;
  std::vector<double> stds;
};

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == '/' || c == ' ' || c == '.') c = '_';
  return s;
}

}  // namespace

std::vector<std::string> emit_plots(const std::vector<ResultRow>& rows,
                                    const std::string& out_dir) {
  // (experiment, metric) -> method -> split -> values
  std::map<std::pair<std::string, std::string>,
           std::map<std::string, std::map<double, std::vector<double>>>>
      groups;
  for (const auto& r : rows)
    groups[{r.experiment, r.metric}][r.method][r.split_fraction].push_back(
        r.value);

  std::vector<std::string> files;
  std::filesystem::create_directories(out_dir);
  for (const auto& [key, by_method] : groups) {
    if (by_method.empty()) {
      std::cerr << "warning: no series for " << key.first << "/" << key.second
                << ", skipping plot\n";
      continue;
    }
    std::map<std::string, Series> series;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& [method, by_split] : by_method) {
      Series s;
      for (const auto& [split, vals] : by_split) {
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= vals.size();
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        double sd = vals.size() > 1 ? std::sqrt(var / (vals.size() - 1)) : 0.0;
        s.xs.push_back(split);
        s.means.push_back(mean);
        s.stds.push_back(sd);
        xmin = std::min(xmin, split);
        xmax = std::max(xmax, split);
        ymin = std::min(ymin, mean - sd);
        ymax = std::max(ymax, mean + sd);
      }
      series[method] = std::move(s);
    }
    bool log_x = xmin > 0.0 && xmax / xmin >= 10.0;
    if (ymax <= ymin) {
      ymin -= 0.5;
      ymax += 0.5;
    }
    double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    const double W = 640, H = 420, L = 70, R = 20, T = 30, B = 50;
    auto xpix = [&](double x) {
      double u;
      if (log_x)
        u = (std::log10(x) - std::log10(xmin)) /
            (std::log10(xmax) - std::log10(xmin));
      else
        u = xmax > xmin ? (x - xmin) / (xmax - xmin) : 0.5;
      return L + u * (W - L - R);
    };
    auto ypix = [&](double y) {
      return H - B - (y - ymin) / (ymax - ymin) * (H - T - B);
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
        << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H
        << "\">\n";
    svg << "<rect width=\"" << W << "\" height=\"" << H
        << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" "
           "font-family=\"monospace\" font-size=\"14\">"
        << key.first << " : " << key.second << "</text>\n";
    // axes
    svg << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R
        << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L
        << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    // y ticks
    for (int i = 0; i <= 4; ++i) {
      double y = ymin + i * (ymax - ymin) / 4;
      svg << "<text x=\"" << L - 6 << "\" y=\"" << fmt6(ypix(y) + 4)
          << "\" text-anchor=\"end\" font-family=\"monospace\" "
             "font-size=\"11\">"
          << fmt6(y) << "</text>\n";
    }
    // x ticks at observed splits
    std::set<double> splits;
    for (const auto& [m, s] : series)
      for (double x : s.xs) splits.insert(x);
    for (double x : splits)
      svg << "<text x=\"" << fmt6(xpix(x)) << "\" y=\"" << H - B + 18
          << "\" text-anchor=\"middle\" font-family=\"monospace\" "
             "font-size=\"11\">"
          << fmt6(x) << "</text>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
        << "\" text-anchor=\"middle\" font-family=\"monospace\" "
           "font-size=\"12\">train split"
        << (log_x ? " (log)" : "") << "</text>\n";

    int ci = 0;
    double legend_y = T + 14;
    for (const auto& [method, s] : series) {
      const char* color = kPalette[ci % 8];
      ++ci;
      if (s.xs.size() > 1) {
        // std band
        std::ostringstream band;
        for (size_t i = 0; i < s.xs.size(); ++i)
          band << fmt6(xpix(s.xs[i])) << "," << fmt6(ypix(s.means[i] + s.stds[i]))
               << " ";
        for (size_t i = s.xs.size(); i-- > 0;)
          band << fmt6(xpix(s.xs[i])) << "," << fmt6(ypix(s.means[i] - s.stds[i]))
               << " ";
        svg << "<polygon points=\"" << band.str() << "\" fill=\"" << color
            << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
        std::ostringstream line;
        for (size_t i = 0; i < s.xs.size(); ++i)
          line << fmt6(xpix(s.xs[i])) << "," << fmt6(ypix(s.means[i])) << " ";
        svg << "<polyline points=\"" << line.str() << "\" fill=\"none\" "
            << "stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
      }
      for (size_t i = 0; i < s.xs.size(); ++i)
        svg << "<circle cx=\"" << fmt6(xpix(s.xs[i])) << "\" cy=\""
            << fmt6(ypix(s.means[i])) << "\" r=\"3\" fill=\"" << color
            << "\"/>\n";
      svg << "<text x=\"" << W - R - 6 << "\" y=\"" << fmt6(legend_y)
          << "\" text-anchor=\"end\" font-family=\"monospace\" "
             "font-size=\"12\" fill=\""
          << color << "\">" << method << "</text>\n";
      legend_y += 16;
    }
    svg << "</svg>\n";

    std::string name =
        sanitize(key.first) + "_" + sanitize(key.second) + ".svg";
    std::string path = (std::filesystem::path(out_dir) / name).string();
    std::ofstream f(path, std::ios::binary);
    f << svg.str();
    files.push_back(path);
  }
  return files;
}

int run_verify(std::ostream& report, int trials, uint64_t seed) {
  std::mt19937_64 rng(seed);
  int failures = 0;
  for (int i = 0; i < trials; ++i) {
    auto t = verify_trial(rng, i % 4 == 3);
    if (!t.pass) ++failures;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "trial %03d: kl_residual=%.3e inequality=%s "
                  "compose_residual=%.3e equiv_residual=%.3e %s%s",
                  i, t.kl_residual, t.inequality ? "ok" : "VIOLATED",
                  t.compose_residual, t.equiv_residual,
                  t.infinite ? "[infinite] " : "", t.pass ? "PASS" : "FAIL");
    report << buf << "\n";
  }
  report << "verify: " << (trials - failures) << "/" << trials
         << " trials passed\n";
  return failures;
}

OracleReport run_oracle(int grid_size, uint64_t seed) {
  Grid g = grid::generate_maze(grid_size, seed);
  auto e = grid::solve_expert(g);
  auto test = data::build_test_set(g, e);
  OracleReport out;
  out.transitions = static_cast<int>(test.size());
  auto pos = models::analytic_idm_pos(1.0);
  auto img = models::analytic_idm_img(g, 1.0);
  auto pos_fn = idm_fn_of(pos, g);
  auto img_fn = idm_fn_of(img, g);
  out.pos_accuracy = metric_idm_accuracy(pos_fn, test);
  out.img_accuracy = metric_idm_accuracy(img_fn, test);
  return out;
}

}  // namespace idm::harness
