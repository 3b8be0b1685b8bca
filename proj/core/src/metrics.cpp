#include "idm/metrics.hpp"

#include <cmath>

namespace idm::harness {

using data::Transition;

PolicyFn policy_fn_of(const models::Model& m, const grid::Grid& g) {
  if (m.spec.role != models::Role::Policy)
    throw models::SpecError("policy_fn_of expects a policy model");
  const models::Model* mp = &m;
  const grid::Grid* gp = &g;
  return [mp, gp](grid::PosState s, std::optional<grid::PosState> goal) {
    Transition rec{s, std::nullopt, s, goal};
    return models::predict_one(*mp, *gp, rec);
  };
}

PolicyFn policy_fn_of(const learn::ComposedPolicy& p) {
  const learn::ComposedPolicy* pp = &p;
  return [pp](grid::PosState s, std::optional<grid::PosState> goal) {
    return pp->distribution(s, goal);
  };
}

IdmDistFn idm_fn_of(const models::Model& m, const grid::Grid& g) {
  if (m.spec.role != models::Role::Idm)
    throw models::SpecError("idm_fn_of expects an idm model");
  const models::Model* mp = &m;
  const grid::Grid* gp = &g;
  return [mp, gp](const Transition& t) {
    return models::predict_one(*mp, *gp, t);
  };
}

double metric_accuracy(const PolicyFn& policy,
                       const std::vector<Transition>& test_set) {
  if (test_set.empty()) throw data::ParameterError("empty test set");
  long hits = 0;
  for (const auto& t : test_set) {
    auto d = policy(t.s, t.goal);
    if (models::argmax_action(d) == *t.a) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test_set.size());
}

double metric_idm_accuracy(const IdmDistFn& idm,
                           const std::vector<Transition>& test_set) {
  if (test_set.empty()) throw data::ParameterError("empty test set");
  long hits = 0;
  for (const auto& t : test_set) {
    if (models::argmax_action(idm(t)) == *t.a) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test_set.size());
}

double metric_reward(const PolicyFn& policy, const grid::Grid& g,
                     int episodes, int horizon, std::mt19937_64& rng) {
  if (episodes < 1 || horizon < 1)
    throw data::ParameterError("episodes and horizon must be positive");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    grid::PosState s = g.start;
    for (int t = 0; t < horizon && !(s == g.goal); ++t) {
      auto d = policy(s, std::nullopt);
      double r = u(rng), acc = 0.0;
      int a = 3;
      for (int k = 0; k < 4; ++k) {
        acc += d[k];
        if (r < acc) {
          a = k;
          break;
        }
      }
      s = grid::step(g, s, static_cast<grid::Action>(a));
    }
    if (s == g.goal) ++successes;
  }
  return static_cast<double>(successes) / static_cast<double>(episodes);
}

namespace {

double row_entropy(const std::array<double, 4>& d) {
  double h = 0.0;
  for (double p : d)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

}  // namespace

double metric_entropy(const PolicyFn& policy,
                      const std::vector<Transition>& test_inputs) {
  if (test_inputs.empty()) throw data::ParameterError("empty test set");
  double h = 0.0;
  for (const auto& t : test_inputs) h += row_entropy(policy(t.s, t.goal));
  return h / static_cast<double>(test_inputs.size());
}

double metric_idm_entropy(const IdmDistFn& idm,
                          const std::vector<Transition>& test_inputs) {
  if (test_inputs.empty()) throw data::ParameterError("empty test set");
  double h = 0.0;
  for (const auto& t : test_inputs) h += row_entropy(idm(t));
  return h / static_cast<double>(test_inputs.size());
}

double metric_nll(const PolicyFn& policy,
                  const std::vector<Transition>& test_set) {
  if (test_set.empty()) throw data::ParameterError("empty test set");
  double nll = 0.0;
  for (const auto& t : test_set) {
    auto d = policy(t.s, t.goal);
    const double p = d[*t.a];
    nll -= std::log(std::max(p, 1e-300));
  }
  return nll / static_cast<double>(test_set.size());
}

}  // namespace idm::harness
