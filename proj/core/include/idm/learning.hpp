#pragma once

#include <functional>

#include "idm/models.hpp"

namespace idm::learn {

enum class BatchRule { Min32, Full, Min512 };

struct TrainConfig {
  double lr = 1e-3;
  BatchRule batch_rule = BatchRule::Full;
  int max_epochs = 2000;
  double early_stop_loss = 1e-4;
  uint64_t seed = 0;
};

int batch_size_for(BatchRule rule, size_t n);

struct TrainResult {
  models::Model model;
  std::vector<double> epoch_loss;
  int epochs_run = 0;
};

// Cross-entropy training of a policy on labeled transitions (behavior
// cloning).
TrainResult train_bc(const grid::Grid& g,
                     const std::vector<data::Transition>& labeled,
                     const models::ArchSpec& spec, const TrainConfig& cfg);

// Maximum-likelihood IDM training on labeled transitions.
TrainResult train_idm(const grid::Grid& g,
                      const std::vector<data::Transition>& labeled,
                      const models::ArchSpec& spec, const TrainConfig& cfg);

// Deterministic video model: s (and optional goal) -> s'.
using VmFn = std::function<grid::PosState(grid::PosState,
                                          std::optional<grid::PosState>)>;

VmFn ground_truth_vm_fn(const grid::Grid& g);
// Per-goal ground-truth VM for the multi-goal experiment.
VmFn goal_conditioned_vm_fn(const grid::Grid& g);

// pi_{v,h}(a|s) with a deterministic VM: the IDM evaluated at (s, v(s)).
struct ComposedPolicy {
  const grid::Grid* grid = nullptr;
  VmFn vm;
  const models::Model* idm = nullptr;

  std::array<double, 4> distribution(
      grid::PosState s, std::optional<grid::PosState> goal = {}) const;
  grid::Action act(grid::PosState s, std::mt19937_64& rng,
                   std::optional<grid::PosState> goal = {}) const;
};

struct IdmLabelingResult {
  TrainResult idm;
  TrainResult policy;
  std::vector<data::Transition> relabeled;
};

// Two-stage pipeline: fit the IDM on D_L, sample labels for D_U once, then
// BC on the relabeled set.
IdmLabelingResult train_idm_labeling(const grid::Grid& g,
                                     const std::vector<data::Transition>& d_l,
                                     const std::vector<data::Transition>& d_u,
                                     const models::ArchSpec& idm_spec,
                                     const models::ArchSpec& policy_spec,
                                     const TrainConfig& idm_cfg,
                                     const TrainConfig& policy_cfg);

}  // namespace idm::learn
