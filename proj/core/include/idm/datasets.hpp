#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "idm/gridworld.hpp"

namespace idm::data {

struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One (s, a, s', goal) record. States are stored as positions; image
// encodings are rendered on demand from the owning grid.
struct Transition {
  grid::PosState s;
  std::optional<int> a;
  grid::PosState s_next;
  std::optional<grid::PosState> goal;
};

inline Transition labeled(grid::PosState s, int a, grid::PosState s_next,
                          std::optional<grid::PosState> goal = {}) {
  return {s, a, s_next, goal};
}

inline Transition strip_action(Transition t) {
  t.a.reset();
  return t;
}

struct DatasetSplit {
  std::vector<Transition> labeled;    // actions present
  std::vector<Transition> unlabeled;  // actions absent
  double split_fraction = 1.0;
  uint64_t seed = 0;
  std::string provenance;
};

// Exhaustive test set: one transition (s, pi*(s), v*(s)) per feasible state.
std::vector<Transition> build_test_set(const grid::Grid& g,
                                       const grid::ExpertPolicy& e);

// Goal-conditioned variant: exhaustive transitions for each listed goal,
// with the goal attached to every record.
std::vector<Transition> build_goal_test_set(
    const grid::Grid& g, const std::vector<grid::PosState>& goals);

// ceil(fraction*N) labeled records without replacement; unlabeled = the full
// set with actions stripped.
DatasetSplit sample_train_split(const std::vector<Transition>& full,
                                double fraction, uint64_t seed);

enum class RelabelMode { Sample, Argmax };

// Action distribution of a model at an unlabeled record.
using IdmFn = std::function<std::array<double, 4>(const Transition&)>;

std::vector<Transition> idm_relabel(const std::vector<Transition>& unlabeled,
                                    const IdmFn& idm, RelabelMode mode,
                                    std::mt19937_64& rng);

// Columnar text serialization: header naming format and provenance, then one
// transition per line (x,y  action-or-dash  x',y'  optional gx,gy).
void save_dataset(std::ostream& os, const std::vector<Transition>& ts,
                  const std::string& format, const std::string& provenance);
std::vector<Transition> load_dataset(std::istream& is, std::string* format,
                                     std::string* provenance);

}  // namespace idm::data
