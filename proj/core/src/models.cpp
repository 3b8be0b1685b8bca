#include "idm/models.hpp"

#include <algorithm>
#include <cmath>

namespace idm::models {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Value;

const char* arch_name(ArchKind k) {
  switch (k) {
    case ArchKind::LC: return "LC";
    case ArchKind::MLP5: return "MLP5";
    case ArchKind::CNN1: return "CNN1";
    case ArchKind::CNN5: return "CNN5";
  }
  return "?";
}

void ArchSpec::validate() const {
  const bool pos_arch = kind == ArchKind::LC || kind == ArchKind::MLP5;
  if (pos_arch && format != StateFormat::Pos)
    throw SpecError("LC/MLP5 require pos state format");
  if (!pos_arch && format != StateFormat::Img)
    throw SpecError("CNN1/CNN5 require img state format");
  if (goal_conditioned && format == StateFormat::Img)
    throw SpecError("goal conditioning applies to pos format only");
}

int ArchSpec::pos_input_dim() const {
  int dim = role == Role::Idm ? 4 : 2;
  if (goal_conditioned) dim += 2;
  return dim;
}

int ArchSpec::img_channels() const { return role == Role::Idm ? 6 : 3; }

std::vector<Parameter*> Model::param_ptrs() {
  std::vector<Parameter*> out;
  for (auto& p : params) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> Model::param_ptrs() const {
  std::vector<const Parameter*> out;
  for (auto& p : params) out.push_back(&p);
  return out;
}

long Model::param_count() const {
  long n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

namespace {

// MLP5 width. Kept narrow: five layers of 32 units memorize every maze in
// scope at full split, while the smoother interpolation of a small network
// keeps sampled rollouts stable on states outside the training support.
constexpr int kHidden = 32;
constexpr int kCnnChannels = 128; // CNN5 width
constexpr int kCnnDense = 128;

Parameter make_weight(const std::string& name, std::vector<int> shape,
                      int fan_in, std::mt19937_64& rng) {
  Parameter p(name, Tensor::zeros(std::move(shape)));
  ad::init_uniform_fan_in(p.value, fan_in, rng);
  return p;
}

int cnn5_pooled(int d) { return d / 2 / 2 / 2; }

}  // namespace

Model build(const ArchSpec& spec, int height, int width, uint64_t seed) {
  spec.validate();
  Model m;
  m.spec = spec;
  m.height = height;
  m.width = width;
  std::mt19937_64 rng(seed);
  switch (spec.kind) {
    case ArchKind::LC: {
      const int in = spec.pos_input_dim();
      m.params.push_back(make_weight("W", {4, in}, in, rng));
      m.params.emplace_back("b", Tensor::zeros({4}));
      break;
    }
    case ArchKind::MLP5: {
      int in = spec.pos_input_dim();
      for (int l = 0; l < 5; ++l) {
        m.params.push_back(
            make_weight("W" + std::to_string(l), {kHidden, in}, in, rng));
        m.params.emplace_back("b" + std::to_string(l), Tensor::zeros({kHidden}));
        in = kHidden;
      }
      m.params.push_back(make_weight("head_W", {4, kHidden}, kHidden, rng));
      m.params.emplace_back("head_b", Tensor::zeros({4}));
      break;
    }
    case ArchKind::CNN1: {
      const int c = spec.img_channels();
      m.params.push_back(make_weight("K", {4, c, 3, 3}, c * 9, rng));
      m.params.emplace_back("b", Tensor::zeros({4}));
      break;
    }
    case ArchKind::CNN5: {
      int c = spec.img_channels();
      for (int l = 0; l < 3; ++l) {
        m.params.push_back(make_weight("K" + std::to_string(l),
                                       {kCnnChannels, c, 3, 3}, c * 9, rng));
        m.params.emplace_back("kb" + std::to_string(l),
                              Tensor::zeros({kCnnChannels}));
        c = kCnnChannels;
      }
      const int flat = kCnnChannels * cnn5_pooled(height) * cnn5_pooled(width);
      if (flat <= 0) throw SpecError("image too small for CNN5 pooling");
      m.params.push_back(make_weight("W0", {kCnnDense, flat}, flat, rng));
      m.params.emplace_back("b0", Tensor::zeros({kCnnDense}));
      m.params.push_back(
          make_weight("W1", {kCnnDense, kCnnDense}, kCnnDense, rng));
      m.params.emplace_back("b1", Tensor::zeros({kCnnDense}));
      m.params.push_back(make_weight("head_W", {4, kCnnDense}, kCnnDense, rng));
      m.params.emplace_back("head_b", Tensor::zeros({4}));
      break;
    }
  }
  return m;
}

Value* Model::forward(Tape& t, const Tensor& input) const {
  auto& self = const_cast<Model&>(*this);
  std::vector<Parameter*> p = self.param_ptrs();
  Value* x = t.leaf(input);
  Value* logits = nullptr;
  switch (spec.kind) {
    case ArchKind::LC:
      logits = ad::linear(x, t.leaf(*p[0]), t.leaf(*p[1]));
      break;
    case ArchKind::MLP5: {
      Value* h = x;
      for (int l = 0; l < 5; ++l)
        h = ad::relu(ad::linear(h, t.leaf(*p[2 * l]), t.leaf(*p[2 * l + 1])));
      logits = ad::linear(h, t.leaf(*p[10]), t.leaf(*p[11]));
      break;
    }
    case ArchKind::CNN1: {
      Value* c =
          ad::channel_bias(ad::conv2d(x, t.leaf(*p[0]), 0, 1), t.leaf(*p[1]));
      logits = ad::global_max_pool(c);
      break;
    }
    case ArchKind::CNN5: {
      Value* h = x;
      for (int l = 0; l < 3; ++l) {
        h = ad::conv2d(h, t.leaf(*p[2 * l]), 1, 1);
        h = ad::channel_bias(h, t.leaf(*p[2 * l + 1]));
        h = ad::maxpool2x2(ad::relu(h));
      }
      const int B = input.shape[0];
      const int flat = static_cast<int>(h->val.size() / B);
      h = ad::reshape(h, {B, flat});
      h = ad::relu(ad::linear(h, t.leaf(*p[6]), t.leaf(*p[7])));
      h = ad::relu(ad::linear(h, t.leaf(*p[8]), t.leaf(*p[9])));
      logits = ad::linear(h, t.leaf(*p[10]), t.leaf(*p[11]));
      break;
    }
  }
  if (temperature != 1.0) logits = ad::scale(logits, 1.0 / temperature);
  return logits;
}

ad::Tensor encode_batch(const ArchSpec& spec, const grid::Grid& g,
                        const std::vector<data::Transition>& recs) {
  const int B = static_cast<int>(recs.size());
  if (B == 0) throw SpecError("empty batch");
  if (spec.format == StateFormat::Pos) {
    const int in = spec.pos_input_dim();
    // Coordinates are scaled to [0,1]; raw 0..width-1 inputs condition the
    // MLPs badly and make off-support extrapolation erratic.
    const double sx = 1.0 / std::max(g.width - 1, 1);
    const double sy = 1.0 / std::max(g.height - 1, 1);
    Tensor out = Tensor::zeros({B, in});
    for (int n = 0; n < B; ++n) {
      const auto& t = recs[n];
      double* row = &out.values[n * in];
      int c = 0;
      row[c++] = t.s.x * sx;
      row[c++] = t.s.y * sy;
      if (spec.role == Role::Idm) {
        row[c++] = t.s_next.x * sx;
        row[c++] = t.s_next.y * sy;
      }
      if (spec.goal_conditioned) {
        if (!t.goal) throw SpecError("record lacks goal for conditioned model");
        row[c++] = t.goal->x * sx;
        row[c++] = t.goal->y * sy;
      }
    }
    return out;
  }
  const int C = spec.img_channels();
  Tensor out = Tensor::zeros({B, C, g.height, g.width});
  const long plane = static_cast<long>(3) * g.height * g.width;
  for (int n = 0; n < B; ++n) {
    const auto& t = recs[n];
    Tensor s_img = grid::render_img(g, t.s, t.goal);
    std::copy(s_img.values.begin(), s_img.values.end(),
              out.values.begin() + n * static_cast<long>(C) * g.height * g.width);
    if (spec.role == Role::Idm) {
      Tensor n_img = grid::render_img(g, t.s_next, t.goal);
      std::copy(n_img.values.begin(), n_img.values.end(),
                out.values.begin() +
                    n * static_cast<long>(C) * g.height * g.width + plane);
    }
  }
  return out;
}

std::vector<int> labels_of(const std::vector<data::Transition>& recs) {
  std::vector<int> out;
  out.reserve(recs.size());
  for (const auto& t : recs) {
    if (!t.a) throw SpecError("unlabeled record in labeled batch");
    out.push_back(*t.a);
  }
  return out;
}

ad::Tensor predict(const Model& m, const Tensor& input) {
  Tape t;
  Value* probs = ad::softmax(m.forward(t, input));
  return probs->val;
}

std::array<double, 4> predict_one(const Model& m, const grid::Grid& g,
                                  const data::Transition& rec) {
  Tensor p = predict(m, encode_batch(m.spec, g, {rec}));
  return {p.values[0], p.values[1], p.values[2], p.values[3]};
}

double log_prob(const Model& m, const grid::Grid& g,
                const data::Transition& rec, int action) {
  Tape t;
  Value* lp = ad::log_softmax(m.forward(t, encode_batch(m.spec, g, {rec})));
  if (action < 0 || action >= 4) throw std::out_of_range("action index");
  return lp->val.values[action];
}

int argmax_action(const std::array<double, 4>& probs) {
  int a = 0;
  for (int k = 1; k < 4; ++k)
    if (probs[k] > probs[a]) a = k;
  return a;
}

Model analytic_idm_pos(double temperature) {
  if (temperature <= 0.0) throw SpecError("temperature must be positive");
  ArchSpec spec{ArchKind::LC, Role::Idm, StateFormat::Pos, false};
  Model m = build(spec, 0, 0, /*seed=*/0);
  m.temperature = temperature;
  // logits_a = dir_a . (s' - s): weight block [-W | W] over (s, s')
  Tensor& W = m.params[0].value;  // [4,4]
  std::fill(W.values.begin(), W.values.end(), 0.0);
  for (int a = 0; a < 4; ++a) {
    W.values[a * 4 + 0] = -grid::kDx[a];
    W.values[a * 4 + 1] = -grid::kDy[a];
    W.values[a * 4 + 2] = grid::kDx[a];
    W.values[a * 4 + 3] = grid::kDy[a];
  }
  std::fill(m.params[1].value.values.begin(), m.params[1].value.values.end(),
            0.0);
  return m;
}

Model analytic_idm_img(const grid::Grid& g, double temperature) {
  if (temperature <= 0.0) throw SpecError("temperature must be positive");
  ArchSpec spec{ArchKind::CNN1, Role::Idm, StateFormat::Img, false};
  Model m = build(spec, g.height, g.width, /*seed=*/0);
  m.temperature = temperature;
  Tensor& K = m.params[0].value;  // [4,6,3,3]
  std::fill(K.values.begin(), K.values.end(), 0.0);
  std::fill(m.params[1].value.values.begin(), m.params[1].value.values.end(),
            0.0);

  // Render each canonical one-step motion on a small open grid and take the
  // patch difference, so the kernels always follow the rendering convention.
  grid::Grid probe = grid::make_open_grid(5);
  probe.goal = {0, 0};
  const grid::PosState center{2, 2};
  Tensor before = grid::render_img(probe, center);
  for (int a = 0; a < 4; ++a) {
    grid::PosState moved{center.x + grid::kDx[a], center.y + grid::kDy[a]};
    Tensor after = grid::render_img(probe, moved);
    for (int c = 0; c < 3; ++c)
      for (int u = 0; u < 3; ++u)
        for (int v = 0; v < 3; ++v) {
          const int y = center.y - 1 + u, x = center.x - 1 + v;
          const double diff = after.values[(c * 5 + y) * 5 + x] -
                              before.values[(c * 5 + y) * 5 + x];
          // K^a = (W^a, V^a) with W^a = -V^a
          K.values[((a * 6 + c) * 3 + u) * 3 + v] = -diff;
          K.values[((a * 6 + c + 3) * 3 + u) * 3 + v] = diff;
        }
  }
  return m;
}

}  // namespace idm::models
