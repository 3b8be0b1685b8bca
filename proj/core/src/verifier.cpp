#include "idm/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace idm::tab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// KL term with the 0 log(0/0) = 0 convention; p>0, q=0 yields +inf.
double kl_term(double p, double q) {
  if (p == 0.0) return 0.0;
  if (q == 0.0) return kInf;
  return p * std::log(p / q);
}

}  // namespace

void TabularMDP::validate(double tol) const {
  if (n_states <= 0 || n_actions <= 0 || horizon <= 0)
    throw VerificationError("bad MDP dimensions");
  double init_sum = 0.0;
  for (double v : initial) init_sum += v;
  if (std::abs(init_sum - 1.0) > tol)
    throw VerificationError("initial distribution not normalized");
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      double row = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) row += p(s, a, s2);
      if (std::abs(row - 1.0) > tol)
        throw VerificationError("transition row not normalized");
    }
}

Visitation visitation(const TabularMDP& mdp, const TabularPolicy& pi) {
  const int S = mdp.n_states, A = mdp.n_actions;
  Visitation vis;
  vis.state.assign(S, 0.0);
  vis.joint.assign(static_cast<size_t>(S) * A * S, 0.0);
  std::vector<double> cur = mdp.initial;
  for (int t = 0; t < mdp.horizon; ++t) {
    for (int s = 0; s < S; ++s) vis.state[s] += cur[s];
    std::vector<double> next(S, 0.0);
    for (int s = 0; s < S; ++s) {
      if (cur[s] == 0.0) continue;
      for (int a = 0; a < A; ++a) {
        const double w = cur[s] * pi.at(s, a);
        if (w == 0.0) continue;
        for (int s2 = 0; s2 < S; ++s2) next[s2] += w * mdp.p(s, a, s2);
      }
    }
    cur = std::move(next);
  }
  for (double& v : vis.state) v /= mdp.horizon;
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      for (int s2 = 0; s2 < S; ++s2)
        vis.joint[(s * A + a) * S + s2] =
            vis.state[s] * pi.at(s, a) * mdp.p(s, a, s2);
  return vis;
}

std::pair<TabularIDM, TabularVM> induced_idm_vm(const TabularMDP& mdp,
                                                const TabularPolicy& pi) {
  const int S = mdp.n_states, A = mdp.n_actions;
  Visitation vis = visitation(mdp, pi);
  TabularIDM h;
  h.n_states = S;
  h.n_actions = A;
  h.p.assign(static_cast<size_t>(S) * S * A, 0.0);
  h.defined.assign(static_cast<size_t>(S) * S, 0);
  TabularVM v;
  v.n_states = S;
  v.p.assign(static_cast<size_t>(S) * S, 0.0);
  v.defined.assign(S, 0);
  for (int s = 0; s < S; ++s) {
    for (int s2 = 0; s2 < S; ++s2) {
      double pair_mass = 0.0;
      for (int a = 0; a < A; ++a) pair_mass += vis.joint[(s * A + a) * S + s2];
      if (vis.state[s] > 0.0) {
        v.p[s * S + s2] = pair_mass / vis.state[s];
        v.defined[s] = 1;
      }
      if (pair_mass > 0.0) {
        h.defined[s * S + s2] = 1;
        for (int a = 0; a < A; ++a)
          h.p[(s * S + s2) * A + a] =
              vis.joint[(s * A + a) * S + s2] / pair_mass;
      }
    }
  }
  return {h, v};
}

TabularPolicy compose(const TabularVM& v, const TabularIDM& h) {
  const int S = h.n_states, A = h.n_actions;
  if (v.n_states != S) throw VerificationError("compose: table size mismatch");
  TabularPolicy pi;
  pi.n_states = S;
  pi.n_actions = A;
  pi.p.assign(static_cast<size_t>(S) * A, 0.0);
  for (int s = 0; s < S; ++s)
    for (int s2 = 0; s2 < S; ++s2) {
      const double mass = v.at(s, s2);
      if (mass == 0.0) continue;
      if (!h.defined[s * S + s2])
        throw VerificationError(
            "compose: positive VM mass on undefined IDM row");
      for (int a = 0; a < A; ++a)
        pi.p[s * A + a] += mass * h.at(s, s2, a);
    }
  return pi;
}

KlReport check_kl_decomposition(const TabularMDP& mdp,
                                const TabularPolicy& expert,
                                const TabularIDM& h_hat) {
  const int S = mdp.n_states, A = mdp.n_actions;
  Visitation vis = visitation(mdp, expert);
  auto [h_star, v_star] = induced_idm_vm(mdp, expert);

  KlReport rep;
  // lhs: E_{p(s,s')} KL(h* || h_hat)
  for (int s = 0; s < S; ++s)
    for (int s2 = 0; s2 < S; ++s2) {
      double pair_mass = 0.0;
      for (int a = 0; a < A; ++a) pair_mass += vis.joint[(s * A + a) * S + s2];
      if (pair_mass == 0.0) continue;
      for (int a = 0; a < A; ++a)
        rep.lhs +=
            pair_mass * kl_term(h_star.at(s, s2, a), h_hat.at(s, s2, a));
    }

  TabularPolicy pi_hat = compose(v_star, h_hat);

  // policy term: E_{p(s)} KL(pi* || pi_{v*,h_hat})
  for (int s = 0; s < S; ++s) {
    if (vis.state[s] == 0.0) continue;
    for (int a = 0; a < A; ++a)
      rep.policy_term +=
          vis.state[s] * kl_term(expert.at(s, a), pi_hat.at(s, a));
  }

  // dynamics term: E_{p(s,a)} KL(p(.|s,a) || h_hat(a|s,.) v*(.|s)/pi_hat(a|s))
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const double sa_mass = vis.state[s] * expert.at(s, a);
      if (sa_mass == 0.0) continue;
      for (int s2 = 0; s2 < S; ++s2) {
        const double denom = pi_hat.at(s, a);
        const double q =
            denom > 0.0 ? h_hat.at(s, s2, a) * v_star.at(s, s2) / denom : 0.0;
        rep.dynamics_term += sa_mass * kl_term(mdp.p(s, a, s2), q);
      }
    }

  rep.infinite = std::isinf(rep.lhs) || std::isinf(rep.policy_term) ||
                 std::isinf(rep.dynamics_term);
  if (rep.infinite) {
    rep.equality_residual = 0.0;
    rep.inequality_holds = std::isinf(rep.lhs);
  } else {
    rep.equality_residual =
        std::abs(rep.lhs - rep.policy_term - rep.dynamics_term);
    rep.inequality_holds = rep.lhs >= rep.policy_term - 1e-12;
  }
  return rep;
}

EquivReport check_equivalence(const TabularMDP& mdp,
                              const TabularPolicy& expert,
                              const TabularIDM& h_hat) {
  const int S = mdp.n_states, A = mdp.n_actions;
  Visitation vis = visitation(mdp, expert);
  auto [h_star, v_star] = induced_idm_vm(mdp, expert);
  TabularPolicy composed = compose(v_star, h_hat);

  // Population IDM labeling: per state, the cross-entropy minimizer is the
  // normalized label distribution sum_{s'} p(s) v*(s'|s) h_hat(a|s,s').
  EquivReport rep;
  for (int s = 0; s < S; ++s) {
    if (vis.state[s] == 0.0) continue;
    std::vector<double> w(A, 0.0);
    double z = 0.0;
    for (int s2 = 0; s2 < S; ++s2) {
      const double mass = vis.state[s] * v_star.at(s, s2);
      if (mass == 0.0) continue;
      for (int a = 0; a < A; ++a) {
        w[a] += mass * h_hat.at(s, s2, a);
        z += mass * h_hat.at(s, s2, a);
      }
    }
    if (z == 0.0) continue;
    for (int a = 0; a < A; ++a)
      rep.max_residual =
          std::max(rep.max_residual, std::abs(w[a] / z - composed.at(s, a)));
  }
  return rep;
}

double entropy_a_given_s(const TabularMDP& mdp, const TabularPolicy& pi) {
  Visitation vis = visitation(mdp, pi);
  double h = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) {
    if (vis.state[s] == 0.0) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double p = pi.at(s, a);
      if (p > 0.0) h -= vis.state[s] * p * std::log(p);
    }
  }
  return h;
}

double entropy_a_given_ss(const TabularMDP& mdp, const TabularPolicy& pi) {
  const int S = mdp.n_states, A = mdp.n_actions;
  Visitation vis = visitation(mdp, pi);
  auto [h_star, v_star] = induced_idm_vm(mdp, pi);
  double h = 0.0;
  for (int s = 0; s < S; ++s)
    for (int s2 = 0; s2 < S; ++s2) {
      double pair_mass = 0.0;
      for (int a = 0; a < A; ++a) pair_mass += vis.joint[(s * A + a) * S + s2];
      if (pair_mass == 0.0) continue;
      for (int a = 0; a < A; ++a) {
        const double p = h_star.at(s, s2, a);
        if (p > 0.0) h -= pair_mass * p * std::log(p);
      }
    }
  return h;
}

namespace {

void dirichlet_row(double* row, int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> exp_dist(1.0);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    row[i] = exp_dist(rng);
    z += row[i];
  }
  for (int i = 0; i < n; ++i) row[i] /= z;
}

void sparse_dirichlet_row(double* row, int n, std::mt19937_64& rng) {
  dirichlet_row(row, n, rng);
  std::uniform_int_distribution<int> keep_dist(1, n);
  const int keep = keep_dist(rng);
  // zero everything but the `keep` largest entries, renormalize
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return row[a] > row[b]; });
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i >= keep) row[order[i]] = 0.0;
    z += row[order[i]];
  }
  for (int i = 0; i < n; ++i) row[i] /= z;
}

}  // namespace

TabularMDP random_mdp(int n_states, int n_actions, int horizon,
                      std::mt19937_64& rng, bool sparse) {
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.horizon = horizon;
  mdp.transition.assign(static_cast<size_t>(n_states) * n_actions * n_states,
                        0.0);
  mdp.initial.assign(n_states, 0.0);
  dirichlet_row(mdp.initial.data(), n_states, rng);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      double* row = &mdp.transition[(s * n_actions + a) * n_states];
      if (sparse)
        sparse_dirichlet_row(row, n_states, rng);
      else
        dirichlet_row(row, n_states, rng);
    }
  mdp.validate();
  return mdp;
}

TabularPolicy random_policy(int n_states, int n_actions,
                            std::mt19937_64& rng) {
  TabularPolicy pi;
  pi.n_states = n_states;
  pi.n_actions = n_actions;
  pi.p.assign(static_cast<size_t>(n_states) * n_actions, 0.0);
  for (int s = 0; s < n_states; ++s)
    dirichlet_row(&pi.p[s * n_actions], n_actions, rng);
  return pi;
}

TabularIDM random_idm(int n_states, int n_actions, std::mt19937_64& rng) {
  TabularIDM h;
  h.n_states = n_states;
  h.n_actions = n_actions;
  h.p.assign(static_cast<size_t>(n_states) * n_states * n_actions, 0.0);
  h.defined.assign(static_cast<size_t>(n_states) * n_states, 1);
  for (int s = 0; s < n_states; ++s)
    for (int s2 = 0; s2 < n_states; ++s2)
      dirichlet_row(&h.p[(s * n_states + s2) * n_actions], n_actions, rng);
  return h;
}

}  // namespace idm::tab
