#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace idm::tab {

struct VerificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exact finite MDP: transition[s][a][s'], initial[s], finite horizon.
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transition;  // [S*A*S]
  std::vector<double> initial;     // [S]
  int horizon = 1;

  double p(int s, int a, int s2) const {
    return transition[(s * n_actions + a) * n_states + s2];
  }
  void validate(double tol = 1e-12) const;
};

struct TabularPolicy {
  int n_states = 0, n_actions = 0;
  std::vector<double> p;  // [S*A]
  double at(int s, int a) const { return p[s * n_actions + a]; }
};

// h[s][s'][a]; rows with zero transition probability are flagged undefined.
struct TabularIDM {
  int n_states = 0, n_actions = 0;
  std::vector<double> p;           // [S*S*A]
  std::vector<uint8_t> defined;    // [S*S]
  double at(int s, int s2, int a) const {
    return p[(s * n_states + s2) * n_actions + a];
  }
};

struct TabularVM {
  int n_states = 0;
  std::vector<double> p;         // [S*S]
  std::vector<uint8_t> defined;  // [S]
  double at(int s, int s2) const { return p[s * n_states + s2]; }
};

struct Visitation {
  std::vector<double> state;  // p_pi(s), horizon-averaged
  std::vector<double> joint;  // p_pi(s,a,s')
};

// Exact forward recursion over t=1..T, averaged; joint assembled from the
// averaged state marginal.
Visitation visitation(const TabularMDP& mdp, const TabularPolicy& pi);

// h*(a|s,s') and v*(s'|s) derived from the transition visitation.
std::pair<TabularIDM, TabularVM> induced_idm_vm(const TabularMDP& mdp,
                                                const TabularPolicy& pi);

// pi(a|s) = sum_{s'} h(a|s,s') v(s'|s). Positive VM mass on an undefined IDM
// row is a verification error.
TabularPolicy compose(const TabularVM& v, const TabularIDM& h);

struct KlReport {
  double lhs = 0.0;            // E_{p(s,s')} KL(h* || h_hat)
  double policy_term = 0.0;    // E_{p(s)} KL(pi* || pi_{v*,h_hat})
  double dynamics_term = 0.0;  // E_{p(s,a)} KL(p(.|s,a) || p_{v*,h_hat}(.|s,a))
  bool inequality_holds = false;
  double equality_residual = 0.0;
  bool infinite = false;  // h_hat put zero mass where h* is positive
};

KlReport check_kl_decomposition(const TabularMDP& mdp,
                                const TabularPolicy& expert,
                                const TabularIDM& h_hat);

struct EquivReport {
  double max_residual = 0.0;  // |population IDM-labeling policy - compose|
};

EquivReport check_equivalence(const TabularMDP& mdp,
                              const TabularPolicy& expert,
                              const TabularIDM& h_hat);

// Conditional entropies under the visitation distribution (nats).
double entropy_a_given_s(const TabularMDP& mdp, const TabularPolicy& pi);
double entropy_a_given_ss(const TabularMDP& mdp, const TabularPolicy& pi);

// Dirichlet(1) random instances (full support); the sparse variants zero a
// random subset of transitions to exercise undefined-row handling.
TabularMDP random_mdp(int n_states, int n_actions, int horizon,
                      std::mt19937_64& rng, bool sparse = false);
TabularPolicy random_policy(int n_states, int n_actions, std::mt19937_64& rng);
TabularIDM random_idm(int n_states, int n_actions, std::mt19937_64& rng);

}  // namespace idm::tab
