#include "idm/gridworld.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace idm::grid {

const char* action_name(Action a) {
  switch (a) {
    case Action::Right: return "right";
    case Action::Left: return "left";
    case Action::Up: return "up";
    case Action::Down: return "down";
  }
  return "?";
}

Grid generate_maze(int size, uint64_t seed) {
  if (size < 5) throw DomainError("maze size too small");
  // Carve a perfect maze on the largest odd sub-lattice with a full wall
  // border; an even requested size gets one extra wall row/column so free
  // cells never touch the image border.
  const int M = (size % 2 == 1) ? size : size - 1;
  Grid g;
  g.width = g.height = size;
  g.seed = seed;
  g.walls.assign(static_cast<size_t>(size) * size, 1);
  std::mt19937_64 rng(seed);

  auto carve = [&](int x, int y) { g.walls[y * size + x] = 0; };
  const int cells = (M - 1) / 2;  // lattice cells per axis, at odd coords
  std::vector<uint8_t> visited(static_cast<size_t>(cells) * cells, 0);
  std::vector<std::pair<int, int>> stack;
  std::uniform_int_distribution<int> cell_dist(0, cells - 1);
  int cx = cell_dist(rng), cy = cell_dist(rng);
  visited[cy * cells + cx] = 1;
  carve(2 * cx + 1, 2 * cy + 1);
  stack.emplace_back(cx, cy);
  while (!stack.empty()) {
    auto [x, y] = stack.back();
    std::array<int, 4> order = {0, 1, 2, 3};
    std::shuffle(order.begin(), order.end(), rng);
    bool moved = false;
    for (int oi : order) {
      const int nx = x + kDx[oi], ny = y + kDy[oi];
      if (nx < 0 || nx >= cells || ny < 0 || ny >= cells) continue;
      if (visited[ny * cells + nx]) continue;
      visited[ny * cells + nx] = 1;
      carve(2 * nx + 1, 2 * ny + 1);
      carve(x + nx + 1, y + ny + 1);  // wall cell between the two lattice cells
      stack.emplace_back(nx, ny);
      moved = true;
      break;
    }
    if (!moved) stack.pop_back();
  }

  std::vector<PosState> free_cells;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (!g.walls[y * size + x]) free_cells.push_back({x, y});
  std::shuffle(free_cells.begin(), free_cells.end(), rng);
  g.start = free_cells[0];
  g.goal = free_cells[1];
  return g;
}

Grid make_open_grid(int n) {
  if (n < 2) throw DomainError("open grid too small");
  Grid g;
  g.width = g.height = n;
  g.walls.assign(static_cast<size_t>(n) * n, 0);
  g.start = {0, n - 1};      // top-left
  g.goal = {n - 1, 0};       // bottom-right
  return g;
}

PosState step(const Grid& g, PosState s, Action a) {
  if (g.wall(s.x, s.y)) throw DomainError("step from infeasible state");
  const int ai = static_cast<int>(a);
  const int nx = s.x + kDx[ai], ny = s.y + kDy[ai];
  if (g.wall(nx, ny)) return s;
  return {nx, ny};
}

std::string to_text(const Grid& g) {
  std::ostringstream os;
  for (int y = g.height - 1; y >= 0; --y) {
    for (int x = 0; x < g.width; ++x) {
      PosState c{x, y};
      char ch = g.walls[y * g.width + x] ? '#' : '.';
      if (c == g.start) ch = 'S';
      if (c == g.goal) ch = 'G';
      os << ch;
    }
    os << "\n";
  }
  return os.str();
}

Grid from_text(const std::string& text) {
  std::vector<std::string> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) rows.push_back(line);
  if (rows.empty()) throw DomainError("empty grid text");
  Grid g;
  g.height = static_cast<int>(rows.size());
  g.width = static_cast<int>(rows[0].size());
  g.walls.assign(static_cast<size_t>(g.width) * g.height, 0);
  for (int r = 0; r < g.height; ++r) {
    if (static_cast<int>(rows[r].size()) != g.width)
      throw DomainError("ragged grid text");
    const int y = g.height - 1 - r;
    for (int x = 0; x < g.width; ++x) {
      switch (rows[r][x]) {
        case '#': g.walls[y * g.width + x] = 1; break;
        case '.': break;
        case 'S': g.start = {x, y}; break;
        case 'G': g.goal = {x, y}; break;
        default: throw DomainError("bad grid character");
      }
    }
  }
  return g;
}

ExpertPolicy solve_expert(const Grid& g) {
  ExpertPolicy e;
  const size_t n = g.walls.size();
  e.dist.assign(n, -1);
  e.action.assign(n, -1);
  std::deque<PosState> q;
  e.dist[g.index(g.goal)] = 0;
  q.push_back(g.goal);
  while (!q.empty()) {
    PosState s = q.front();
    q.pop_front();
    for (int a = 0; a < kNumActions; ++a) {
      const int nx = s.x + kDx[a], ny = s.y + kDy[a];
      if (g.wall(nx, ny)) continue;
      const int ni = ny * g.width + nx;
      if (e.dist[ni] >= 0) continue;
      e.dist[ni] = e.dist[g.index(s)] + 1;
      q.push_back({nx, ny});
    }
  }
  // first move of a shortest path, ties broken by canonical action order
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      PosState s{x, y};
      const int i = g.index(s);
      if (g.wall(x, y) || e.dist[i] <= 0) continue;
      for (int a = 0; a < kNumActions; ++a) {
        PosState ns = step(g, s, static_cast<Action>(a));
        if (!(ns == s) && e.dist[g.index(ns)] == e.dist[i] - 1) {
          e.action[i] = a;
          break;
        }
      }
    }
  return e;
}

std::vector<PosState> feasible_states(const Grid& g, const ExpertPolicy& e) {
  // reachable from start via flood fill, goal excluded
  std::vector<uint8_t> seen(g.walls.size(), 0);
  std::deque<PosState> q;
  if (g.wall(g.start.x, g.start.y)) throw DomainError("start is a wall");
  seen[g.index(g.start)] = 1;
  q.push_back(g.start);
  while (!q.empty()) {
    PosState s = q.front();
    q.pop_front();
    for (int a = 0; a < kNumActions; ++a) {
      PosState ns = step(g, s, static_cast<Action>(a));
      if (!seen[g.index(ns)]) {
        seen[g.index(ns)] = 1;
        q.push_back(ns);
      }
    }
  }
  std::vector<PosState> out;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      PosState s{x, y};
      if (seen[g.index(s)] && !(s == g.goal)) out.push_back(s);
    }
  (void)e;
  return out;
}

PosState ground_truth_vm(const Grid& g, const ExpertPolicy& e, PosState s) {
  return step(g, s, e.act(g, s));
}

ad::Tensor render_img(const Grid& g, PosState s,
                      std::optional<PosState> goal_override) {
  ad::Tensor img = ad::Tensor::zeros({3, g.height, g.width});
  const int HW = g.height * g.width;
  for (int i = 0; i < HW; ++i) img.values[i] = g.walls[i] ? 1.0 : 0.0;
  if (g.wall(s.x, s.y)) throw DomainError("render from wall cell");
  img.values[HW + g.index(s)] = 1.0;
  PosState goal = goal_override.value_or(g.goal);
  img.values[2 * HW + goal.y * g.width + goal.x] = 1.0;
  return img;
}

std::array<double, 4> StochasticDiagonal::distribution(const Grid& g,
                                                       PosState s) const {
  if (s == g.goal) throw DomainError("expert undefined at goal");
  std::array<double, 4> d = {0, 0, 0, 0};
  const bool right_border = s.x == g.width - 1;
  const bool bottom_border = s.y == 0;
  if (right_border) {
    d[static_cast<int>(Action::Down)] = 1.0;
  } else if (bottom_border) {
    d[static_cast<int>(Action::Right)] = 1.0;
  } else {
    d[static_cast<int>(Action::Right)] = p_right;
    d[static_cast<int>(Action::Down)] = 1.0 - p_right;
  }
  return d;
}

Action StochasticDiagonal::sample(const Grid& g, PosState s,
                                  std::mt19937_64& rng) const {
  auto d = distribution(g, s);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng), acc = 0.0;
  for (int a = 0; a < 4; ++a) {
    acc += d[a];
    if (r < acc) return static_cast<Action>(a);
  }
  return Action::Down;
}

std::vector<RawTransition> sample_trajectory(const Grid& g,
                                             const StochasticDiagonal& expert,
                                             int horizon,
                                             std::mt19937_64& rng) {
  if (horizon < 1) throw DomainError("horizon must be >= 1");
  std::vector<RawTransition> traj;
  PosState s = g.start;
  for (int t = 0; t < horizon; ++t) {
    Action a = expert.sample(g, s, rng);
    PosState ns = step(g, s, a);
    traj.push_back({s, static_cast<int>(a), ns});
    s = ns;
    if (s == g.goal) break;
  }
  return traj;
}

IdmTable ground_truth_idm_table(const Grid& g, const ExpertPolicy& e) {
  IdmTable table;
  for (PosState s : feasible_states(g, e)) {
    Action a = e.act(g, s);
    PosState ns = step(g, s, a);
    std::array<double, 4> d = {0, 0, 0, 0};
    d[static_cast<int>(a)] = 1.0;
    table[{s, ns}] = d;
  }
  return table;
}

IdmTable ground_truth_idm_table(const Grid& g, const StochasticDiagonal& e) {
  IdmTable table;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      PosState s{x, y};
      if (s == g.goal) continue;
      auto d = e.distribution(g, s);
      for (int a = 0; a < 4; ++a) {
        if (d[a] == 0.0) continue;
        PosState ns = step(g, s, static_cast<Action>(a));
        auto& row = table[{s, ns}];
        row[a] += d[a];
      }
    }
  for (auto& [key, row] : table) {
    double z = row[0] + row[1] + row[2] + row[3];
    for (double& v : row) v /= z;
  }
  return table;
}

}  // namespace idm::grid
