#include "idm/learning.hpp"

#include <algorithm>
#include <numeric>

namespace idm::learn {

using ad::Tape;
using ad::Tensor;
using ad::Value;
using data::Transition;
using models::ArchSpec;
using models::Model;

int batch_size_for(BatchRule rule, size_t n) {
  const int N = static_cast<int>(n);
  switch (rule) {
    case BatchRule::Min32: return std::min(32, N);
    case BatchRule::Full: return N;
    case BatchRule::Min512: return std::min(512, N);
  }
  return N;
}

namespace {

Tensor gather_batch(const Tensor& all, const std::vector<size_t>& idx,
                    size_t begin, size_t end) {
  const long row = all.size() / all.shape[0];
  std::vector<int> shape = all.shape;
  shape[0] = static_cast<int>(end - begin);
  Tensor out = Tensor::zeros(shape);
  for (size_t k = begin; k < end; ++k)
    std::copy_n(&all.values[idx[k] * row], row,
                &out.values[(k - begin) * row]);
  return out;
}

TrainResult train_supervised(const grid::Grid& g,
                             const std::vector<Transition>& labeled,
                             const ArchSpec& spec, const TrainConfig& cfg) {
  if (labeled.empty()) throw data::ParameterError("empty training set");
  spec.validate();
  TrainResult res;
  res.model = models::build(spec, g.height, g.width, cfg.seed);
  const Tensor inputs = models::encode_batch(spec, g, labeled);
  const std::vector<int> labels = models::labels_of(labeled);
  const size_t n = labeled.size();
  const int bs = batch_size_for(cfg.batch_rule, n);

  ad::Adam opt(res.model.param_ptrs(), ad::AdamConfig{.lr = cfg.lr});
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (static_cast<size_t>(bs) < n) std::shuffle(idx.begin(), idx.end(), rng);
    double epoch_loss = 0.0;
    size_t seen = 0;
    for (size_t begin = 0; begin < n; begin += bs) {
      const size_t end = std::min(n, begin + bs);
      Tape t;
      Value* logits = nullptr;
      std::vector<int> batch_labels;
      if (begin == 0 && end == n) {
        logits = res.model.forward(t, inputs);
        batch_labels = labels;
      } else {
        logits = res.model.forward(t, gather_batch(inputs, idx, begin, end));
        batch_labels.reserve(end - begin);
        for (size_t k = begin; k < end; ++k)
          batch_labels.push_back(labels[idx[k]]);
      }
      Value* loss = ad::cross_entropy_loss(logits, batch_labels);
      opt.zero_grad();
      t.backward(loss);
      opt.step();
      epoch_loss += loss->val.item() * static_cast<double>(end - begin);
      seen += end - begin;
    }
    epoch_loss /= static_cast<double>(seen);
    res.epoch_loss.push_back(epoch_loss);
    res.epochs_run = epoch + 1;
    if (epoch_loss < cfg.early_stop_loss) break;
  }
  return res;
}

}  // namespace

TrainResult train_bc(const grid::Grid& g,
                     const std::vector<Transition>& labeled,
                     const ArchSpec& spec, const TrainConfig& cfg) {
  if (spec.role != models::Role::Policy)
    throw models::SpecError("train_bc expects a policy spec");
  return train_supervised(g, labeled, spec, cfg);
}

TrainResult train_idm(const grid::Grid& g,
                      const std::vector<Transition>& labeled,
                      const ArchSpec& spec, const TrainConfig& cfg) {
  if (spec.role != models::Role::Idm)
    throw models::SpecError("train_idm expects an idm spec");
  return train_supervised(g, labeled, spec, cfg);
}

VmFn ground_truth_vm_fn(const grid::Grid& g) {
  auto expert = std::make_shared<grid::ExpertPolicy>(grid::solve_expert(g));
  const grid::Grid* gp = &g;
  return [gp, expert](grid::PosState s, std::optional<grid::PosState>) {
    return grid::ground_truth_vm(*gp, *expert, s);
  };
}

VmFn goal_conditioned_vm_fn(const grid::Grid& g) {
  // lazily solved expert per goal, cached
  auto cache = std::make_shared<
      std::map<grid::PosState, std::shared_ptr<grid::ExpertPolicy>>>();
  grid::Grid base = g;
  return [base, cache](grid::PosState s, std::optional<grid::PosState> goal) {
    grid::PosState target = goal.value_or(base.goal);
    auto it = cache->find(target);
    if (it == cache->end()) {
      grid::Grid gg = base;
      gg.goal = target;
      it = cache->emplace(target, std::make_shared<grid::ExpertPolicy>(
                                      grid::solve_expert(gg)))
               .first;
    }
    grid::Grid gg = base;
    gg.goal = target;
    return grid::ground_truth_vm(gg, *it->second, s);
  };
}

std::array<double, 4> ComposedPolicy::distribution(
    grid::PosState s, std::optional<grid::PosState> goal) const {
  grid::PosState next = vm(s, goal);
  if (next == s)
    throw grid::DomainError("video model produced a blocked transition");
  Transition rec{s, std::nullopt, next, goal};
  return models::predict_one(*idm, *grid, rec);
}

grid::Action ComposedPolicy::act(grid::PosState s, std::mt19937_64& rng,
                                 std::optional<grid::PosState> goal) const {
  auto d = distribution(s, goal);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng), acc = 0.0;
  for (int a = 0; a < 4; ++a) {
    acc += d[a];
    if (r < acc) return static_cast<grid::Action>(a);
  }
  return grid::Action::Down;
}

IdmLabelingResult train_idm_labeling(const grid::Grid& g,
                                     const std::vector<Transition>& d_l,
                                     const std::vector<Transition>& d_u,
                                     const ArchSpec& idm_spec,
                                     const ArchSpec& policy_spec,
                                     const TrainConfig& idm_cfg,
                                     const TrainConfig& policy_cfg) {
  if (d_l.empty() || d_u.empty())
    throw data::ParameterError("idm labeling requires non-empty D_L and D_U");
  IdmLabelingResult res;
  res.idm = train_idm(g, d_l, idm_spec, idm_cfg);
  const Model& idm = res.idm.model;
  std::mt19937_64 relabel_rng(policy_cfg.seed ^ 0xa5a5a5a5deadbeefULL);
  res.relabeled = data::idm_relabel(
      d_u,
      [&](const Transition& t) { return models::predict_one(idm, g, t); },
      data::RelabelMode::Sample, relabel_rng);
  res.policy = train_bc(g, res.relabeled, policy_spec, policy_cfg);
  return res;
}

}  // namespace idm::learn
