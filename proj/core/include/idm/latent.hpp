#pragma once

#include "idm/learning.hpp"

namespace idm::latent {

struct StageOrderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LatentConfig {
  int latent_dim = 8;
  int codebook_size = 16;
  double commitment_coeff = 0.25;
  // Step budgets proportioned 5:6:1 over the LAPO stages (pretrain, latent
  // policy, decode head) and 5:1:6 over the LAPO+ stages (pretrain, decode
  // head, relabel + BC), so both pipelines consume the same total.
  int stage1_steps = 2000;
  int policy_steps = 2400;
  int decode_steps = 400;
  int label_steps = 2400;
  int batch_size = 32;
  double lr = 1e-3;
  int enc_channels = 32;
  int hidden_dim = 64;
  models::StateFormat state_format = models::StateFormat::Img;
  uint64_t seed = 0;
};

// Three conv-relu-maxpool blocks then a two-layer MLP head.
struct ConvEncoder {
  int in_channels = 0, height = 0, width = 0, out_dim = 0;
  int channels = 32, hidden = 64;
  std::vector<ad::Parameter> params;

  ad::Value* forward(ad::Tape& t, ad::Value* x) const;
  std::vector<ad::Parameter*> param_ptrs();
};

struct Mlp {
  std::vector<int> dims;  // e.g. {in, hidden, out}; ReLU between layers
  std::vector<ad::Parameter> params;

  ad::Value* forward(ad::Tape& t, ad::Value* x) const;
  std::vector<ad::Parameter*> param_ptrs();
};

struct LatentStack {
  LatentConfig cfg;
  int height = 0, width = 0;
  ConvEncoder lidm;           // (s,s') -> z
  ConvEncoder state_enc;      // s -> features (LFDM input half)
  Mlp lfdm_head;              // (features, quantized z) -> s' pixels
  ad::Parameter codebook;     // [codebook_size, latent_dim]
  ConvEncoder latent_policy;  // s -> z_hat
  Mlp decode_head;            // z -> action logits
  bool stage1_done = false;
  bool stage2_done = false;
};

LatentStack make_stack(const grid::Grid& g, const LatentConfig& cfg);

int nearest_code(const LatentStack& stack, const double* z);

// Pre-quantized LIDM latent for one transition, no gradients.
std::vector<double> lidm_latent(const LatentStack& stack, const grid::Grid& g,
                                const data::Transition& t);

struct Stage1Stats {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<long> code_usage;  // selections per codebook entry, last epoch
};

// Joint LIDM/LFDM training under the pixel reconstruction loss with a
// straight-through VQ bottleneck plus codebook and commitment terms.
Stage1Stats lapo_stage1(LatentStack& stack, const grid::Grid& g,
                        const std::vector<data::Transition>& d_unlabeled);

// Latent policy regression onto pre-quantized LIDM outputs (LIDM frozen).
double lapo_stage2_policy(LatentStack& stack, const grid::Grid& g,
                          const std::vector<data::Transition>& d_unlabeled);

// LAPO stage 3: decode head on D_L over frozen latent-policy outputs.
double lapo_stage3_decode_policy(LatentStack& stack, const grid::Grid& g,
                                 const std::vector<data::Transition>& d_l);

// LAPO+ stage 2: decode head on D_L over frozen pre-quantized LIDM outputs.
double lapo_plus_stage2_decode_idm(LatentStack& stack, const grid::Grid& g,
                                   const std::vector<data::Transition>& d_l);

// Final policies / decoded IDM.
std::array<double, 4> lapo_policy_distribution(const LatentStack& stack,
                                               const grid::Grid& g,
                                               grid::PosState s);
std::array<double, 4> decoded_idm_distribution(const LatentStack& stack,
                                               const grid::Grid& g,
                                               const data::Transition& t);

struct ImgPolicy {
  ConvEncoder enc;
  Mlp head;
  int height = 0, width = 0;

  std::array<double, 4> distribution(const grid::Grid& g,
                                     grid::PosState s) const;
};

// LAPO+ stage 3: IDM-label D_U with the decoded IDM (sampled labels) and
// train a fresh image policy by BC on the relabeled set.
ImgPolicy lapo_plus_stage3_label(const LatentStack& stack, const grid::Grid& g,
                                 const std::vector<data::Transition>& d_u);

}  // namespace idm::latent
