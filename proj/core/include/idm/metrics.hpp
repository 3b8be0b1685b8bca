#pragma once

#include "idm/learning.hpp"

namespace idm::harness {

// Action distribution at a (state, optional goal) query.
using PolicyFn = std::function<std::array<double, 4>(
    grid::PosState, std::optional<grid::PosState>)>;

PolicyFn policy_fn_of(const models::Model& m, const grid::Grid& g);
PolicyFn policy_fn_of(const learn::ComposedPolicy& p);

// Distribution at a full transition query (IDM view).
using IdmDistFn =
    std::function<std::array<double, 4>(const data::Transition&)>;

IdmDistFn idm_fn_of(const models::Model& m, const grid::Grid& g);

// Fraction of test records whose argmax action matches the label.
double metric_accuracy(const PolicyFn& policy,
                       const std::vector<data::Transition>& test_set);
double metric_idm_accuracy(const IdmDistFn& idm,
                           const std::vector<data::Transition>& test_set);

// Fraction of 25-episode rollouts (sampled actions) reaching the goal
// within `horizon` steps.
double metric_reward(const PolicyFn& policy, const grid::Grid& g,
                     int episodes, int horizon, std::mt19937_64& rng);

// Mean Shannon entropy (nats) of the predictive distribution.
double metric_entropy(const PolicyFn& policy,
                      const std::vector<data::Transition>& test_inputs);
double metric_idm_entropy(const IdmDistFn& idm,
                          const std::vector<data::Transition>& test_inputs);

// Mean negative log-likelihood of the test labels.
double metric_nll(const PolicyFn& policy,
                  const std::vector<data::Transition>& test_set);

}  // namespace idm::harness
