// Acceptance suite: one test case per criterion, each printing a single
// PASS/FAIL line. Criterion 9's accuracy comparison is a soft check and
// prints a FLAG line instead of failing.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "doctest.h"
#include "idm/harness.hpp"
#include "idm/latent.hpp"
#include "idm/verifier.hpp"

using namespace idm;
using harness::ExperimentConfig;
using harness::ResultRow;

namespace {

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s — %s\n", id, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  CHECK_MESSAGE(pass, "criterion " << id << ": " << detail);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// mean of matching rows
double mean_of(const std::vector<ResultRow>& rows, const std::string& exp,
               const std::string& method, double split,
               const std::string& metric) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows)
    if (r.experiment == exp && r.method == method && r.metric == metric &&
        std::fabs(r.split_fraction - split) < 1e-9) {
      sum += r.value;
      ++n;
    }
  REQUIRE(n > 0);
  return sum / n;
}

bool all_rows(const std::vector<ResultRow>& rows, const std::string& exp,
              const std::string& method, const std::string& metric,
              const std::function<bool(double)>& pred, int expect_n) {
  int n = 0;
  bool ok = true;
  for (const auto& r : rows)
    if (r.experiment == exp && r.method == method && r.metric == metric) {
      ++n;
      ok = ok && pred(r.value);
    }
  return ok && n == expect_n;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

TEST_CASE("criterion 1: analytic IDM exactness") {
  auto t0 = std::chrono::steady_clock::now();
  bool exact = true;
  int transitions = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    auto rep = harness::run_oracle(10, seed);
    exact = exact && rep.pos_accuracy == 1.0 && rep.img_accuracy == 1.0;
    transitions += rep.transitions;
  }
  const double dt = seconds_since(t0);
  report(1, exact && dt < 10.0,
         "pos+img argmax exact on 5 random 10x10 mazes (" +
             std::to_string(transitions) + " transitions, " + fmt2(dt) + "s)");
}

TEST_CASE("criterion 2: tabular identity suite") {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  double max_kl = 0.0, max_compose = 0.0, max_equiv = 0.0;
  bool inequality = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int S = 2 + static_cast<int>(rng() % 5);  // 2..6 states
    const int A = 2 + static_cast<int>(rng() % 2);  // 2..3 actions
    const int T = 1 + static_cast<int>(rng() % 5);  // horizon 1..5
    tab::TabularMDP mdp = tab::random_mdp(S, A, T, rng);
    tab::TabularPolicy expert = tab::random_policy(S, A, rng);
    tab::TabularIDM h_hat = tab::random_idm(S, A, rng);

    tab::KlReport kl = tab::check_kl_decomposition(mdp, expert, h_hat);
    max_kl = std::max(max_kl, std::fabs(kl.equality_residual));
    inequality = inequality && kl.inequality_holds && !kl.infinite;

    auto [h_star, v_star] = tab::induced_idm_vm(mdp, expert);
    tab::TabularPolicy composed = tab::compose(v_star, h_star);
    auto vis = tab::visitation(mdp, expert);
    for (int s = 0; s < S; ++s) {
      if (vis.state[s] <= 0.0) continue;
      for (int a = 0; a < A; ++a)
        max_compose = std::max(
            max_compose, std::fabs(composed.at(s, a) - expert.at(s, a)));
    }
    max_equiv = std::max(max_equiv,
                         tab::check_equivalence(mdp, expert, h_hat).max_residual);
  }
  const double dt = seconds_since(t0);
  const bool pass = max_kl < 1e-10 && inequality && max_compose < 1e-12 &&
                    max_equiv < 1e-12 && dt < 30.0;
  std::ostringstream d;
  d << "100 MDPs: kl residual " << max_kl << ", compose " << max_compose
    << ", equivalence " << max_equiv << ", inequality "
    << (inequality ? "holds" : "violated") << " (" << fmt2(dt) << "s)";
  report(2, pass, d.str());
}

TEST_CASE("criterion 3: low-capacity VM-IDM vs BC") {
  ExperimentConfig cfg;
  cfg.experiment = "complexity_pos";
  cfg.methods = {"BC-LC", "VMIDM-LC"};
  cfg.maze_sizes = {10, 20};
  cfg.splits = {1.0};
  cfg.seeds = {1, 2, 3, 4, 5};
  auto rows = harness::run_experiment(cfg, 1);
  const bool vmidm_perfect =
      all_rows(rows, "complexity_pos/maze10", "VMIDM-LC", "test_accuracy",
               [](double v) { return v >= 0.999; }, 5) &&
      all_rows(rows, "complexity_pos/maze20", "VMIDM-LC", "test_accuracy",
               [](double v) { return v >= 0.999; }, 5);
  const bool bc_limited =
      all_rows(rows, "complexity_pos/maze20", "BC-LC", "test_accuracy",
               [](double v) { return v < 0.95; }, 5);
  const double bc20 =
      mean_of(rows, "complexity_pos/maze20", "BC-LC", 1.0, "test_accuracy");
  report(3, vmidm_perfect && bc_limited,
         "LC-IDM∘v* ≥ 0.999 on 10x10 and 20x20 (5/5 seeds); LC-BC on 20x20 "
         "mean " + fmt2(bc20) + " < 0.95");
}

TEST_CASE("criterion 4: sample efficiency at split 0.1") {
  ExperimentConfig cfg;
  cfg.experiment = "complexity_pos";
  cfg.methods = {"BC-MLP5", "VMIDM-MLP5"};
  cfg.maze_sizes = {20};
  cfg.splits = {0.1};
  cfg.seeds = {1, 2, 3, 4, 5};
  auto rows = harness::run_experiment(cfg, 1);
  const double bc =
      mean_of(rows, "complexity_pos/maze20", "BC-MLP5", 0.1, "test_accuracy");
  const double vmidm = mean_of(rows, "complexity_pos/maze20", "VMIDM-MLP5",
                               0.1, "test_accuracy");
  report(4, vmidm > bc,
         "20x20 split 0.1 mean accuracy: VMIDM " + fmt2(vmidm) + " > BC " +
             fmt2(bc));
}

TEST_CASE("criterion 5: multi-goal maze") {
  ExperimentConfig cfg;
  cfg.experiment = "goal";
  cfg.methods = {"BC", "VMIDM"};
  cfg.maze_sizes = {10};
  cfg.splits = {1.0};
  cfg.seeds = {1, 2, 3, 4, 5};
  cfg.num_goals = 10;
  auto rows = harness::run_experiment(cfg, 1);
  const bool vmidm_perfect =
      all_rows(rows, "goal/maze10", "VMIDM", "test_accuracy",
               [](double v) { return v >= 0.999; }, 5);
  const bool bc_capped = all_rows(rows, "goal/maze10", "BC", "test_accuracy",
                                  [](double v) { return v < 0.9; }, 5);
  const double bc = mean_of(rows, "goal/maze10", "BC", 1.0, "test_accuracy");
  report(5, vmidm_perfect && bc_capped,
         "10 goals, split 1.0: VMIDM ≥ 0.999 (5/5), BC mean " + fmt2(bc) +
             " < 0.9 every seed");
}

TEST_CASE("criterion 6: stochasticity trends") {
  std::vector<uint64_t> seeds(10);
  for (int i = 0; i < 10; ++i) seeds[i] = i + 1;

  ExperimentConfig half;  // both methods at p_right = 0.5
  half.experiment = "stochasticity";
  half.methods = {"BC", "IDMLABEL"};
  half.splits = {0.05, 0.1, 0.25};
  half.seeds = seeds;
  half.p_rights = {0.5};
  auto rows = harness::run_experiment(half, 1);

  ExperimentConfig ninety;  // BC only, small splits, at p_right = 0.9
  ninety.experiment = "stochasticity";
  ninety.methods = {"BC"};
  ninety.splits = {0.05, 0.1};
  ninety.seeds = seeds;
  ninety.p_rights = {0.9};
  auto rows9 = harness::run_experiment(ninety, 1);
  rows.insert(rows.end(), rows9.begin(), rows9.end());

  bool trend_a = true, trend_b = true;
  std::ostringstream d;
  for (double split : {0.05, 0.1}) {
    const double lo =
        mean_of(rows, "stochasticity/p0.5", "BC", split, "avg_reward");
    const double hi =
        mean_of(rows, "stochasticity/p0.9", "BC", split, "avg_reward");
    trend_a = trend_a && lo < hi;
    d << "BC@" << split << ": p0.5 " << fmt2(lo) << " < p0.9 " << fmt2(hi)
      << "; ";
  }
  for (double split : {0.05, 0.1, 0.25}) {
    const double bc =
        mean_of(rows, "stochasticity/p0.5", "BC", split, "avg_reward");
    const double lab =
        mean_of(rows, "stochasticity/p0.5", "IDMLABEL", split, "avg_reward");
    trend_b = trend_b && lab >= bc;
    d << "IDMLABEL@" << split << " " << fmt2(lab) << " ≥ BC " << fmt2(bc)
      << "; ";
  }
  report(6, trend_a && trend_b, d.str());
}

TEST_CASE("criterion 7: entropy gap") {
  // exact tables for the p_right = 0.5 diagonal expert on the open 20x20 grid
  grid::Grid g = grid::make_open_grid(20);
  grid::StochasticDiagonal expert{0.5};
  auto e = grid::solve_expert(g);
  auto cells = grid::feasible_states(g, e);
  double h_s = 0.0;
  int interior = 0;
  for (auto s : cells) {
    auto dist = expert.distribution(g, s);
    for (double p : dist)
      if (p > 0.0) h_s -= p * std::log(p) / cells.size();
    int support = 0;
    for (double p : dist) support += p > 0.0;
    interior += support == 2;
  }
  const double expected =
      std::log(2.0) * interior / static_cast<double>(cells.size());
  double h_ss = 0.0;
  for (const auto& [key, dist] : grid::ground_truth_idm_table(g, expert))
    for (double p : dist)
      if (p > 0.0) h_ss -= p * std::log(p);
  const bool exact_ok =
      std::fabs(h_s - expected) < 1e-12 && std::fabs(h_ss) < 1e-12 && h_s > 0.0;

  // trained estimates at split 1.0
  ExperimentConfig cfg;
  cfg.experiment = "entropy_gap";
  cfg.methods = {"BC", "IDM"};
  cfg.splits = {1.0};
  cfg.seeds = {1, 2, 3, 4, 5};
  auto rows = harness::run_experiment(cfg, 1);
  bool trained_ok = true;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    double h_bc = -1.0, h_idm = -1.0;
    for (const auto& r : rows) {
      if (r.seed != seed || r.metric != "entropy") continue;
      if (r.method == "BC") h_bc = r.value;
      if (r.method == "IDM") h_idm = r.value;
    }
    trained_ok = trained_ok && h_bc >= 0.0 && h_idm >= 0.0 && h_idm < h_bc;
  }
  const double bc_mean = mean_of(rows, "entropy_gap/p0.5", "BC", 1.0, "entropy");
  const double idm_mean =
      mean_of(rows, "entropy_gap/p0.5", "IDM", 1.0, "entropy");
  report(7, exact_ok && trained_ok,
         "exact H(a|s)=" + fmt2(h_s) + " (=ln2·interior), H(a|s,s')=0; "
         "trained H(idm) " + fmt2(idm_mean) + " < H(bc) " + fmt2(bc_mean) +
             " every seed");
}

TEST_CASE("criterion 8: per-layer gradient checks") {
  using namespace idm::ad;
  constexpr double kH = 1e-5;
  constexpr double kTol = 1e-4;
  std::mt19937_64 rng(88);
  auto rand_tensor = [&](std::vector<int> shape, bool off_kinks) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (double& v : t.values) {
      v = d(rng);
      if (off_kinks && std::fabs(v) < 0.05) v += v < 0 ? -0.1 : 0.1;
    }
    return t;
  };
  // finite-difference check of one scalarized layer application
  auto check = [&](const std::function<Value*(Tape&, Value*)>& f,
                   const Tensor& x) {
    Tape t;
    Value* xi = t.leaf(x, true);
    t.backward(f(t, xi));
    for (size_t i = 0; i < x.values.size(); ++i) {
      Tensor xp = x, xm = x;
      xp.values[i] += kH;
      xm.values[i] -= kH;
      Tape tp, tm;
      const double fd =
          (f(tp, tp.leaf(xp))->val.item() - f(tm, tm.leaf(xm))->val.item()) /
          (2.0 * kH);
      const double g = xi->grad.values[i];
      if (std::fabs(g - fd) / std::max({std::fabs(g), std::fabs(fd), 1.0}) >=
          kTol)
        return false;
    }
    return true;
  };
  auto scalarize = [&](Tape& t, Value* y) {
    Tensor target = Tensor::zeros(y->val.shape);
    std::mt19937_64 r(99);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (double& v : target.values) v = d(r);
    return mse_loss(y, t.leaf(target));
  };

  struct Layer {
    const char* name;
    std::function<bool()> run;
  };
  std::vector<Layer> layers = {
      {"linear",
       [&] {
         Tensor x = rand_tensor({2, 3}, false), W = rand_tensor({2, 3}, false),
                b = rand_tensor({2}, false);
         return check(
                    [&](Tape& t, Value* xi) {
                      return scalarize(t, linear(xi, t.leaf(W), t.leaf(b)));
                    },
                    x) &&
                check(
                    [&](Tape& t, Value* wi) {
                      return scalarize(t, linear(t.leaf(x), wi, t.leaf(b)));
                    },
                    W);
       }},
      {"conv2d",
       [&] {
         Tensor x = rand_tensor({1, 2, 4, 4}, false),
                K = rand_tensor({2, 2, 3, 3}, false);
         return check(
                    [&](Tape& t, Value* xi) {
                      return scalarize(t, conv2d(xi, t.leaf(K), 1, 1));
                    },
                    x) &&
                check(
                    [&](Tape& t, Value* ki) {
                      return scalarize(t, conv2d(t.leaf(x), ki, 1, 1));
                    },
                    K);
       }},
      {"channel_bias",
       [&] {
         Tensor x = rand_tensor({1, 2, 3, 3}, false),
                b = rand_tensor({2}, false);
         return check(
             [&](Tape& t, Value* bi) {
               return scalarize(t, channel_bias(t.leaf(x), bi));
             },
             b);
       }},
      {"relu",
       [&] {
         Tensor x = rand_tensor({2, 6}, true);
         return check(
             [&](Tape& t, Value* xi) { return scalarize(t, relu(xi)); }, x);
       }},
      {"maxpool2x2",
       [&] {
         Tensor x = rand_tensor({1, 2, 4, 4}, true);
         return check(
             [&](Tape& t, Value* xi) { return scalarize(t, maxpool2x2(xi)); },
             x);
       }},
      {"global_max_pool",
       [&] {
         Tensor x = rand_tensor({1, 2, 3, 3}, true);
         return check(
             [&](Tape& t, Value* xi) {
               return scalarize(t, global_max_pool(xi));
             },
             x);
       }},
      {"softmax",
       [&] {
         Tensor x = rand_tensor({2, 4}, false);
         return check(
             [&](Tape& t, Value* xi) { return scalarize(t, softmax(xi)); }, x);
       }},
      {"log_softmax",
       [&] {
         Tensor x = rand_tensor({2, 4}, false);
         return check(
             [&](Tape& t, Value* xi) { return scalarize(t, log_softmax(xi)); },
             x);
       }},
      {"cross_entropy",
       [&] {
         Tensor x = rand_tensor({3, 4}, false);
         return check(
             [&](Tape& t, Value* xi) {
               return cross_entropy_loss(xi, {0, 2, 3});
             },
             x);
       }},
      {"mse",
       [&] {
         Tensor x = rand_tensor({2, 5}, false),
                y = rand_tensor({2, 5}, false);
         return check(
             [&](Tape& t, Value* xi) { return mse_loss(xi, t.leaf(y)); }, x);
       }},
  };
  bool pass = true;
  std::string failed;
  for (const auto& layer : layers) {
    for (int c = 0; c < 50; ++c)
      if (!layer.run()) {
        pass = false;
        failed += std::string(" ") + layer.name;
        break;
      }
  }
  report(8, pass,
         pass ? "10 layers x 50 randomized cases, rel err < 1e-4"
              : "failing layers:" + failed);
}

TEST_CASE("criterion 9: latent pipeline integrity") {
  // hard part 1: straight-through estimator (forward = quantized, backward =
  // identity to the pre-quantized latent)
  bool st_ok = true;
  {
    using namespace idm::ad;
    Tape t;
    Tensor z = Tensor::zeros({1, 3});
    z.values = {0.2, -0.4, 0.9};
    Tensor e = Tensor::zeros({1, 3});
    e.values = {1.0, 0.0, -1.0};
    Value* zi = t.leaf(z, true);
    Value* zq = add(zi, detach(sub(t.leaf(e), zi)));
    for (int i = 0; i < 3; ++i)
      st_ok = st_ok && std::fabs(zq->val.values[i] - e.values[i]) < 1e-12;
    Tensor target = Tensor::zeros({1, 3});
    t.backward(mse_loss(zq, t.leaf(target)));
    for (int i = 0; i < 3; ++i) {
      const double expect = 2.0 / 3.0 * e.values[i];
      st_ok = st_ok && std::fabs(zi->grad.values[i] - expect) < 1e-12;
    }
  }

  // hard part 2: stage isolation on a small instance
  bool frozen_ok = true;
  {
    grid::Grid g = grid::make_open_grid(8);
    auto e = grid::solve_expert(g);
    auto pool = data::build_test_set(g, e);
    std::vector<data::Transition> unlabeled;
    for (const auto& t : pool) unlabeled.push_back(data::strip_action(t));
    latent::LatentConfig lc;
    lc.latent_dim = 4;
    lc.codebook_size = 8;
    lc.stage1_steps = 100;
    lc.policy_steps = 50;
    lc.decode_steps = 50;
    lc.enc_channels = 8;
    lc.hidden_dim = 16;
    lc.seed = 9;
    latent::LatentStack s = latent::make_stack(g, lc);
    latent::lapo_stage1(s, g, unlabeled);
    auto snap = [](std::vector<ad::Parameter*> ps) {
      std::vector<std::vector<double>> out;
      for (auto* p : ps) out.push_back(p->value.values);
      return out;
    };
    auto same = [](std::vector<ad::Parameter*> ps,
                   const std::vector<std::vector<double>>& before) {
      for (size_t i = 0; i < ps.size(); ++i)
        if (ps[i]->value.values != before[i]) return false;
      return true;
    };
    auto lidm0 = snap(s.lidm.param_ptrs());
    auto code0 = s.codebook.value.values;
    latent::lapo_stage2_policy(s, g, unlabeled);
    frozen_ok = frozen_ok && same(s.lidm.param_ptrs(), lidm0) &&
                s.codebook.value.values == code0;
    auto policy0 = snap(s.latent_policy.param_ptrs());
    latent::lapo_stage3_decode_policy(s, g, pool);
    frozen_ok = frozen_ok && same(s.latent_policy.param_ptrs(), policy0) &&
                same(s.lidm.param_ptrs(), lidm0);
  }
  report(9, st_ok && frozen_ok,
         "VQ straight-through gradient exact; frozen stages bit-identical");

  // soft part: LAPO+ vs LAPO mean accuracy (flagged, never a hard failure)
  ExperimentConfig cfg;
  cfg.experiment = "lapo_compare";
  cfg.methods = {"LAPO", "LAPO_PLUS"};
  cfg.maze_sizes = {10};
  cfg.seeds = {1, 2, 3};
  cfg.labeled_size = 16;
  auto rows = harness::run_experiment(cfg, 1);
  const double lapo =
      mean_of(rows, "lapo_compare/maze10", "LAPO", 1.0, "test_accuracy");
  const double plus =
      mean_of(rows, "lapo_compare/maze10", "LAPO_PLUS", 1.0, "test_accuracy");
  std::printf("criterion  9: %s — soft comparison: LAPO+ mean %s %s LAPO mean "
              "%s (|D_L|=16, 3 seeds)\n",
              plus >= lapo ? "PASS" : "FLAG", fmt2(plus).c_str(),
              plus >= lapo ? "≥" : "<", fmt2(lapo).c_str());
  std::fflush(stdout);
}

TEST_CASE("criterion 10: CSV byte determinism") {
  auto csv_of = [](const ExperimentConfig& cfg, int jobs) {
    auto rows = harness::run_experiment(cfg, jobs);
    std::ostringstream ss;
    harness::write_csv(ss, rows);
    return ss.str();
  };

  ExperimentConfig verify;
  verify.experiment = "verify_tabular";
  verify.seeds = {1, 2, 3};
  verify.trials = 25;
  const bool verify_stable =
      csv_of(verify, 1) == csv_of(verify, 1) &&
      csv_of(verify, 1) == csv_of(verify, 2);

  ExperimentConfig train;  // one full training cell, rerun from scratch
  train.experiment = "stochasticity";
  train.methods = {"BC"};
  train.splits = {0.05};
  train.seeds = {1};
  train.p_rights = {0.5};
  const bool train_stable = csv_of(train, 1) == csv_of(train, 1);

  report(10, verify_stable && train_stable,
         "verification grid (jobs 1 and 2) and a training cell reproduce "
         "byte-identical CSVs");
}
