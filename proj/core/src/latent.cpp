#include "idm/latent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace idm::latent {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Value;
using data::Transition;

namespace {

Parameter make_weight(const std::string& name, std::vector<int> shape,
                      int fan_in, std::mt19937_64& rng) {
  Parameter p(name, Tensor::zeros(std::move(shape)));
  ad::init_uniform_fan_in(p.value, fan_in, rng);
  return p;
}

int pooled(int d) { return d / 2 / 2 / 2; }

ConvEncoder make_encoder(const std::string& prefix, int in_channels, int h,
                         int w, int out_dim, const LatentConfig& cfg,
                         std::mt19937_64& rng) {
  ConvEncoder e;
  e.in_channels = in_channels;
  e.height = h;
  e.width = w;
  e.out_dim = out_dim;
  e.channels = cfg.enc_channels;
  e.hidden = cfg.hidden_dim;
  int c = in_channels;
  for (int l = 0; l < 3; ++l) {
    e.params.push_back(make_weight(prefix + ".K" + std::to_string(l),
                                   {e.channels, c, 3, 3}, c * 9, rng));
    e.params.emplace_back(prefix + ".kb" + std::to_string(l),
                          Tensor::zeros({e.channels}));
    c = e.channels;
  }
  const int flat = e.channels * pooled(h) * pooled(w);
  if (flat <= 0) throw models::SpecError("image too small for encoder pooling");
  e.params.push_back(make_weight(prefix + ".W0", {e.hidden, flat}, flat, rng));
  e.params.emplace_back(prefix + ".b0", Tensor::zeros({e.hidden}));
  e.params.push_back(
      make_weight(prefix + ".W1", {out_dim, e.hidden}, e.hidden, rng));
  e.params.emplace_back(prefix + ".b1", Tensor::zeros({out_dim}));
  return e;
}

Mlp make_mlp(const std::string& prefix, std::vector<int> dims,
             std::mt19937_64& rng) {
  Mlp m;
  m.dims = std::move(dims);
  for (size_t l = 0; l + 1 < m.dims.size(); ++l) {
    m.params.push_back(make_weight(prefix + ".W" + std::to_string(l),
                                   {m.dims[l + 1], m.dims[l]}, m.dims[l], rng));
    m.params.emplace_back(prefix + ".b" + std::to_string(l),
                          Tensor::zeros({m.dims[l + 1]}));
  }
  return m;
}

// (s, s', s'-s): the difference channels make the moved pixel salient, so
// the latent's variance is not dominated by absolute position
constexpr int kPairChannels = 3;

Tensor encode_pair_batch(const grid::Grid& g,
                         const std::vector<Transition>& recs,
                         const std::vector<size_t>& idx) {
  const int B = static_cast<int>(idx.size());
  const int HW = g.height * g.width;
  Tensor out = Tensor::zeros({B, kPairChannels, g.height, g.width});
  for (int n = 0; n < B; ++n) {
    const auto& t = recs[idx[n]];
    Tensor a = grid::render_img(g, t.s, t.goal);
    Tensor b = grid::render_img(g, t.s_next, t.goal);
    auto* dst = out.values.data() + static_cast<long>(n) * kPairChannels * HW;
    for (int i = 0; i < 3 * HW; ++i) dst[i] = b.values[i] - a.values[i];
  }
  return out;
}

Tensor encode_state_batch(const grid::Grid& g,
                          const std::vector<Transition>& recs,
                          const std::vector<size_t>& idx, bool next_state) {
  const int B = static_cast<int>(idx.size());
  const int HW = g.height * g.width;
  Tensor out = Tensor::zeros({B, 3, g.height, g.width});
  for (int n = 0; n < B; ++n) {
    const auto& t = recs[idx[n]];
    Tensor a = grid::render_img(g, next_state ? t.s_next : t.s, t.goal);
    std::copy(a.values.begin(), a.values.end(),
              out.values.begin() + static_cast<long>(n) * 3 * HW);
  }
  return out;
}

std::vector<size_t> sample_batch(size_t n, int batch, std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> dist(0, n - 1);
  std::vector<size_t> idx(std::min<size_t>(batch, n));
  for (auto& i : idx) i = dist(rng);
  return idx;
}

std::vector<int> nearest_codes(const Tensor& z, const Tensor& codebook) {
  const int B = z.shape[0], D = z.shape[1];
  const int K = codebook.shape[0];
  std::vector<int> out(B);
  for (int n = 0; n < B; ++n) {
    double best = std::numeric_limits<double>::infinity();
    int best_k = 0;
    for (int k = 0; k < K; ++k) {
      double d2 = 0.0;
      for (int d = 0; d < D; ++d) {
        const double diff = z.values[n * D + d] - codebook.values[k * D + d];
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        best_k = k;
      }
    }
    out[n] = best_k;
  }
  return out;
}

}  // namespace

Value* ConvEncoder::forward(Tape& t, Value* x) const {
  auto& self = const_cast<ConvEncoder&>(*this);
  auto p = self.param_ptrs();
  Value* h = x;
  for (int l = 0; l < 3; ++l) {
    h = ad::conv2d(h, t.leaf(*p[2 * l]), 1, 1);
    h = ad::channel_bias(h, t.leaf(*p[2 * l + 1]));
    h = ad::maxpool2x2(ad::relu(h));
  }
  const int B = x->val.shape[0];
  h = ad::reshape(h, {B, static_cast<int>(h->val.size() / B)});
  h = ad::relu(ad::linear(h, t.leaf(*p[6]), t.leaf(*p[7])));
  return ad::linear(h, t.leaf(*p[8]), t.leaf(*p[9]));
}

std::vector<Parameter*> ConvEncoder::param_ptrs() {
  std::vector<Parameter*> out;
  for (auto& p : params) out.push_back(&p);
  return out;
}

Value* Mlp::forward(Tape& t, Value* x) const {
  auto& self = const_cast<Mlp&>(*this);
  auto p = self.param_ptrs();
  Value* h = x;
  const size_t layers = dims.size() - 1;
  for (size_t l = 0; l < layers; ++l) {
    h = ad::linear(h, t.leaf(*p[2 * l]), t.leaf(*p[2 * l + 1]));
    if (l + 1 < layers) h = ad::relu(h);
  }
  return h;
}

std::vector<Parameter*> Mlp::param_ptrs() {
  std::vector<Parameter*> out;
  for (auto& p : params) out.push_back(&p);
  return out;
}

LatentStack make_stack(const grid::Grid& g, const LatentConfig& cfg) {
  LatentStack s;
  s.cfg = cfg;
  s.height = g.height;
  s.width = g.width;
  std::mt19937_64 rng(cfg.seed);
  s.lidm = make_encoder("lidm", kPairChannels, g.height, g.width,
                        cfg.latent_dim, cfg, rng);
  s.state_enc =
      make_encoder("state_enc", 3, g.height, g.width, cfg.hidden_dim, cfg, rng);
  s.lfdm_head = make_mlp(
      "lfdm_head",
      {cfg.hidden_dim + cfg.latent_dim, cfg.hidden_dim, 3 * g.height * g.width},
      rng);
  s.codebook = make_weight("codebook", {cfg.codebook_size, cfg.latent_dim},
                           cfg.latent_dim, rng);
  s.latent_policy =
      make_encoder("latent_policy", 3, g.height, g.width, cfg.latent_dim, cfg,
                   rng);
  s.decode_head = make_mlp("decode_head", {cfg.latent_dim, 32, 4}, rng);
  return s;
}

int nearest_code(const LatentStack& stack, const double* z) {
  const int D = stack.cfg.latent_dim, K = stack.cfg.codebook_size;
  double best = std::numeric_limits<double>::infinity();
  int best_k = 0;
  for (int k = 0; k < K; ++k) {
    double d2 = 0.0;
    for (int d = 0; d < D; ++d) {
      const double diff = z[d] - stack.codebook.value.values[k * D + d];
      d2 += diff * diff;
    }
    if (d2 < best) {
      best = d2;
      best_k = k;
    }
  }
  return best_k;
}

std::vector<double> lidm_latent(const LatentStack& stack, const grid::Grid& g,
                                const Transition& t) {
  Tape tape;
  Value* z = stack.lidm.forward(tape, tape.leaf(encode_pair_batch(g, {t}, {0})));
  return z->val.values;
}

Stage1Stats lapo_stage1(LatentStack& stack, const grid::Grid& g,
                        const std::vector<Transition>& d_unlabeled) {
  if (stack.cfg.state_format != models::StateFormat::Img)
    throw models::SpecError("stage 1 requires image-format transitions");
  if (d_unlabeled.empty()) throw data::ParameterError("empty unlabeled set");
  Stage1Stats stats;
  stats.code_usage.assign(stack.cfg.codebook_size, 0);

  std::vector<Parameter*> trained;
  for (auto* p : stack.lidm.param_ptrs()) trained.push_back(p);
  for (auto* p : stack.state_enc.param_ptrs()) trained.push_back(p);
  for (auto* p : stack.lfdm_head.param_ptrs()) trained.push_back(p);
  trained.push_back(&stack.codebook);
  ad::Adam opt(trained, ad::AdamConfig{.lr = stack.cfg.lr});
  std::mt19937_64 rng(stack.cfg.seed ^ 0x51f1c0deULL);

  {
    // seed the codebook from initial encoder outputs so every code starts
    // inside the latent cloud instead of collapsing onto a single entry
    auto idx = sample_batch(d_unlabeled.size(),
                            std::max(stack.cfg.codebook_size,
                                     stack.cfg.batch_size),
                            rng);
    Tape t;
    Value* z = stack.lidm.forward(t, t.leaf(encode_pair_batch(g, d_unlabeled,
                                                              idx)));
    const int D = stack.cfg.latent_dim;
    std::normal_distribution<double> jitter(0.0, 1e-3);
    for (int k = 0; k < stack.cfg.codebook_size; ++k)
      for (int d = 0; d < D; ++d)
        stack.codebook.value.values[k * D + d] =
            z->val.values[(k % idx.size()) * D + d] + jitter(rng);
  }

  constexpr int kRestartInterval = 50;
  std::vector<long> interval_usage(stack.cfg.codebook_size, 0);

  for (int step = 0; step < stack.cfg.stage1_steps; ++step) {
    auto idx = sample_batch(d_unlabeled.size(), stack.cfg.batch_size, rng);
    const int B = static_cast<int>(idx.size());
    Tape t;
    Value* pair = t.leaf(encode_pair_batch(g, d_unlabeled, idx));
    Value* z = stack.lidm.forward(t, pair);
    Value* cb = t.leaf(stack.codebook);
    std::vector<int> codes = nearest_codes(z->val, cb->val);
    Value* e = ad::gather_rows(cb, codes);
    // straight-through: forward uses e, backward passes through z
    Value* zq = ad::add(z, ad::detach(ad::sub(e, z)));

    Value* feats =
        stack.state_enc.forward(t, t.leaf(encode_state_batch(g, d_unlabeled,
                                                             idx, false)));
    Value* recon = stack.lfdm_head.forward(t, ad::concat_cols(feats, zq));
    Value* target =
        t.leaf(Tensor({B, 3 * g.height * g.width},
                      encode_state_batch(g, d_unlabeled, idx, true).values));
    // per-sample sum of squared pixel errors; a plain mean would dilute the
    // one moving pixel by the hundreds of static ones
    Value* loss =
        ad::scale(ad::mse_loss(recon, target), 3.0 * g.height * g.width);
    Value* codebook_loss = ad::mse_loss(e, ad::detach(z));
    Value* commit_loss = ad::mse_loss(z, ad::detach(e));
    Value* total = ad::add(
        loss, ad::add(codebook_loss,
                      ad::scale(commit_loss, stack.cfg.commitment_coeff)));
    opt.zero_grad();
    t.backward(total);
    opt.step();

    if (step == 0) stats.initial_loss = loss->val.item();
    if (step == stack.cfg.stage1_steps - 1) {
      stats.final_loss = loss->val.item();
      for (int c : codes) ++stats.code_usage[c];
    }

    for (int c : codes) ++interval_usage[c];
    if ((step + 1) % kRestartInterval == 0 &&
        step + 1 < stack.cfg.stage1_steps) {
      // dead-code restart: park unused entries on current encoder outputs
      const int D = stack.cfg.latent_dim;
      std::normal_distribution<double> jitter(0.0, 1e-3);
      std::uniform_int_distribution<size_t> pick(0, codes.size() - 1);
      for (int k = 0; k < stack.cfg.codebook_size; ++k) {
        if (interval_usage[k] > 0) continue;
        const size_t n = pick(rng);
        for (int d = 0; d < D; ++d)
          stack.codebook.value.values[k * D + d] =
              z->val.values[n * D + d] + jitter(rng);
      }
      std::fill(interval_usage.begin(), interval_usage.end(), 0);
    }
  }
  stack.stage1_done = true;
  return stats;
}

double lapo_stage2_policy(LatentStack& stack, const grid::Grid& g,
                          const std::vector<Transition>& d_unlabeled) {
  if (!stack.stage1_done) throw StageOrderError("stage 1 must run first");
  ad::Adam opt(stack.latent_policy.param_ptrs(),
               ad::AdamConfig{.lr = stack.cfg.lr});
  std::mt19937_64 rng(stack.cfg.seed ^ 0x52f1c0deULL);
  double last = 0.0;
  for (int step = 0; step < stack.cfg.policy_steps; ++step) {
    auto idx = sample_batch(d_unlabeled.size(), stack.cfg.batch_size, rng);
    // frozen LIDM targets, pre-quantized
    Tensor targets;
    {
      Tape t;
      Value* z =
          stack.lidm.forward(t, t.leaf(encode_pair_batch(g, d_unlabeled, idx)));
      targets = z->val;
    }
    Tape t;
    Value* zhat = stack.latent_policy.forward(
        t, t.leaf(encode_state_batch(g, d_unlabeled, idx, false)));
    Value* loss = ad::mse_loss(zhat, t.leaf(targets));
    opt.zero_grad();
    t.backward(loss);
    opt.step();
    last = loss->val.item();
  }
  stack.stage2_done = true;
  return last;
}

namespace {

double train_decode_head(LatentStack& stack,
                         const std::vector<Tensor>& latents,
                         const std::vector<int>& labels, uint64_t seed_salt) {
  ad::Adam opt(stack.decode_head.param_ptrs(),
               ad::AdamConfig{.lr = stack.cfg.lr});
  std::mt19937_64 rng(stack.cfg.seed ^ seed_salt);
  const size_t n = latents.size();
  const int D = stack.cfg.latent_dim;
  double last = 0.0;
  for (int step = 0; step < stack.cfg.decode_steps; ++step) {
    auto idx = sample_batch(n, stack.cfg.batch_size, rng);
    const int B = static_cast<int>(idx.size());
    Tensor in = Tensor::zeros({B, D});
    std::vector<int> y(B);
    for (int i = 0; i < B; ++i) {
      std::copy_n(latents[idx[i]].values.data(), D, &in.values[i * D]);
      y[i] = labels[idx[i]];
    }
    Tape t;
    Value* logits = stack.decode_head.forward(t, t.leaf(in));
    Value* loss = ad::cross_entropy_loss(logits, y);
    opt.zero_grad();
    t.backward(loss);
    opt.step();
    last = loss->val.item();
  }
  return last;
}

Tensor single_latent(const ConvEncoder& enc, const Tensor& img) {
  Tape t;
  Value* z = enc.forward(t, t.leaf(img));
  return z->val;
}

}  // namespace

double lapo_stage3_decode_policy(LatentStack& stack, const grid::Grid& g,
                                 const std::vector<Transition>& d_l) {
  if (!stack.stage2_done) throw StageOrderError("stage 2 must run first");
  if (d_l.empty()) throw data::ParameterError("empty labeled set");
  std::vector<Tensor> latents;
  std::vector<int> labels = models::labels_of(d_l);
  for (size_t i = 0; i < d_l.size(); ++i)
    latents.push_back(single_latent(
        stack.latent_policy, encode_state_batch(g, d_l, {i}, false)));
  return train_decode_head(stack, latents, labels, 0x53f1c0deULL);
}

double lapo_plus_stage2_decode_idm(LatentStack& stack, const grid::Grid& g,
                                   const std::vector<Transition>& d_l) {
  if (!stack.stage1_done) throw StageOrderError("stage 1 must run first");
  if (d_l.empty()) throw data::ParameterError("empty labeled set");
  // pre-quantized LIDM latents, mirroring LAPO stage 2's convention
  std::vector<Tensor> latents;
  std::vector<int> labels = models::labels_of(d_l);
  for (size_t i = 0; i < d_l.size(); ++i)
    latents.push_back(
        single_latent(stack.lidm, encode_pair_batch(g, d_l, {i})));
  return train_decode_head(stack, latents, labels, 0x54f1c0deULL);
}

namespace {

std::array<double, 4> head_distribution(const LatentStack& stack,
                                        const Tensor& latent) {
  Tape t;
  Value* logits = stack.decode_head.forward(t, t.leaf(latent));
  Value* probs = ad::softmax(logits);
  return {probs->val.values[0], probs->val.values[1], probs->val.values[2],
          probs->val.values[3]};
}

}  // namespace

std::array<double, 4> lapo_policy_distribution(const LatentStack& stack,
                                               const grid::Grid& g,
                                               grid::PosState s) {
  Transition t{s, std::nullopt, s, std::nullopt};
  return head_distribution(
      stack, single_latent(stack.latent_policy,
                           encode_state_batch(g, {t}, {0}, false)));
}

std::array<double, 4> decoded_idm_distribution(const LatentStack& stack,
                                               const grid::Grid& g,
                                               const Transition& t) {
  return head_distribution(
      stack, single_latent(stack.lidm, encode_pair_batch(g, {t}, {0})));
}

std::array<double, 4> ImgPolicy::distribution(const grid::Grid& g,
                                              grid::PosState s) const {
  Transition t{s, std::nullopt, s, std::nullopt};
  Tape tape;
  Value* feats =
      enc.forward(tape, tape.leaf(encode_state_batch(g, {t}, {0}, false)));
  Value* probs = ad::softmax(head.forward(tape, feats));
  return {probs->val.values[0], probs->val.values[1], probs->val.values[2],
          probs->val.values[3]};
}

ImgPolicy lapo_plus_stage3_label(const LatentStack& stack, const grid::Grid& g,
                                 const std::vector<Transition>& d_u) {
  if (!stack.stage1_done) throw StageOrderError("stage 1 must run first");
  if (d_u.empty()) throw data::ParameterError("empty unlabeled set");
  // Labels are resampled from the decoded IDM every batch, a Monte Carlo
  // approximation of the expectation form of the IDM-labeling loss. A single
  // draw per transition would cap the policy at the decoded IDM's mean
  // confidence, which is low when the decode head saw only a handful of
  // labels.
  std::mt19937_64 label_rng(stack.cfg.seed ^ 0x55f1c0deULL);
  std::vector<std::array<double, 4>> dists;
  dists.reserve(d_u.size());
  for (const auto& t : d_u)
    dists.push_back(decoded_idm_distribution(stack, g, t));
  const std::vector<Transition>& relabeled = d_u;

  ImgPolicy policy;
  policy.height = g.height;
  policy.width = g.width;
  std::mt19937_64 init_rng(stack.cfg.seed ^ 0x56f1c0deULL);
  policy.enc = make_encoder("policy_enc", 3, g.height, g.width,
                            stack.cfg.hidden_dim, stack.cfg, init_rng);
  policy.head = make_mlp("policy_head", {stack.cfg.hidden_dim, 32, 4}, init_rng);

  std::vector<Parameter*> trained;
  for (auto* p : policy.enc.param_ptrs()) trained.push_back(p);
  for (auto* p : policy.head.param_ptrs()) trained.push_back(p);
  ad::Adam opt(trained, ad::AdamConfig{.lr = stack.cfg.lr});
  std::mt19937_64 rng(stack.cfg.seed ^ 0x57f1c0deULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int step = 0; step < stack.cfg.label_steps; ++step) {
    auto idx = sample_batch(relabeled.size(), stack.cfg.batch_size, rng);
    std::vector<int> y;
    y.reserve(idx.size());
    for (size_t i : idx) {
      double r = unit(label_rng), acc = 0.0;
      int a = 3;
      for (int k = 0; k < 4; ++k) {
        acc += dists[i][k];
        if (r < acc) { a = k; break; }
      }
      y.push_back(a);
    }
    Tape t;
    Value* feats =
        policy.enc.forward(t, t.leaf(encode_state_batch(g, relabeled, idx,
                                                        false)));
    Value* loss = ad::cross_entropy_loss(policy.head.forward(t, feats), y);
    opt.zero_grad();
    t.backward(loss);
    opt.step();
  }
  return policy;
}

}  // namespace idm::latent
