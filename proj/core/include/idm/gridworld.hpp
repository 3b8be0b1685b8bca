#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "idm/tensor.hpp"

namespace idm::grid {

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Canonical action order across the whole project.
enum class Action : int { Right = 0, Left = 1, Up = 2, Down = 3 };
constexpr int kNumActions = 4;

// (x,y) with y increasing upward.
constexpr std::array<int, 4> kDx = {+1, -1, 0, 0};
constexpr std::array<int, 4> kDy = {0, 0, +1, -1};

const char* action_name(Action a);

struct PosState {
  int x = 0;
  int y = 0;
  bool operator==(const PosState&) const = default;
  auto operator<=>(const PosState&) const = default;
};

struct Grid {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> walls;  // [height*width], row y * width + x
  PosState start;
  PosState goal;
  uint64_t seed = 0;

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  // off-grid counts as wall
  bool wall(int x, int y) const {
    return !in_bounds(x, y) || walls[y * width + x] != 0;
  }
  int index(PosState s) const { return s.y * width + s.x; }
};

// Recursive-backtracker perfect maze with a full wall border, deterministic
// per seed. Supported sizes: 10, 20, 50 (any size >= 5 works).
Grid generate_maze(int size, uint64_t seed);

// n x n grid with no interior walls; start top-left, goal bottom-right.
Grid make_open_grid(int n);

// One step of the deterministic dynamics f(s,a): blocked moves keep the
// player static.
PosState step(const Grid& g, PosState s, Action a);

std::string to_text(const Grid& g);
Grid from_text(const std::string& text);

// Deterministic shortest-path expert; ties broken by canonical action order.
struct ExpertPolicy {
  std::vector<int> dist;    // BFS distance to goal, -1 unreachable
  std::vector<int> action;  // chosen action index, -1 at goal/unreachable

  bool feasible(const Grid& g, PosState s) const {
    return !(s == g.goal) && dist[g.index(s)] >= 0;
  }
  Action act(const Grid& g, PosState s) const {
    int a = action[g.index(s)];
    if (a < 0) throw DomainError("expert undefined at state");
    return static_cast<Action>(a);
  }
};

ExpertPolicy solve_expert(const Grid& g);

// Feasible states: non-wall cells reachable from start, excluding the goal.
std::vector<PosState> feasible_states(const Grid& g, const ExpertPolicy& e);

// Ground-truth video model v*(s) = f(s, pi*(s)).
PosState ground_truth_vm(const Grid& g, const ExpertPolicy& e, PosState s);

// 3-channel binary image: walls, player one-hot, goal one-hot.
// Layout [3, height, width], row r corresponds to y = r.
ad::Tensor render_img(const Grid& g, PosState s,
                      std::optional<PosState> goal_override = {});

// Optimal stochastic expert on the open grid: right w.p. p_right, down
// otherwise; deterministic on the right/bottom border.
struct StochasticDiagonal {
  double p_right = 0.5;
  std::array<double, 4> distribution(const Grid& g, PosState s) const;
  Action sample(const Grid& g, PosState s, std::mt19937_64& rng) const;
};

struct RawTransition {
  PosState s;
  int a = -1;
  PosState s_next;
};

std::vector<RawTransition> sample_trajectory(const Grid& g,
                                             const StochasticDiagonal& expert,
                                             int horizon, std::mt19937_64& rng);

// Exact h*(a|s,s') tables, keyed by (s,s'), enumerated over feasible states
// with uniform state weight. Pairs with zero probability are absent.
using IdmTable = std::map<std::pair<PosState, PosState>, std::array<double, 4>>;

IdmTable ground_truth_idm_table(const Grid& g, const ExpertPolicy& e);
IdmTable ground_truth_idm_table(const Grid& g, const StochasticDiagonal& e);

}  // namespace idm::grid
