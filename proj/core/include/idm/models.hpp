#pragma once

#include <array>
#include <string>
#include <vector>

#include "idm/datasets.hpp"
#include "idm/ops.hpp"
#include "idm/optim.hpp"

namespace idm::models {

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ArchKind { LC, MLP5, CNN1, CNN5 };
enum class Role { Policy, Idm };
enum class StateFormat { Pos, Img };

const char* arch_name(ArchKind k);

struct ArchSpec {
  ArchKind kind = ArchKind::LC;
  Role role = Role::Policy;
  StateFormat format = StateFormat::Pos;
  bool goal_conditioned = false;

  // LC/MLP5 pair with pos, CNN1/CNN5 with img; goal conditioning adds two
  // pos inputs (the goal already lives in an image channel).
  void validate() const;
  int pos_input_dim() const;   // pos format only
  int img_channels() const;    // img format only
};

// A policy or IDM producing 4 action logits.
struct Model {
  ArchSpec spec;
  int height = 0, width = 0;   // image dims, img format only
  double temperature = 1.0;    // logits are divided by this
  std::vector<ad::Parameter> params;

  std::vector<ad::Parameter*> param_ptrs();
  std::vector<const ad::Parameter*> param_ptrs() const;
  long param_count() const;

  // input: [B,in] for pos, [B,C,H,W] for img; returns logits [B,4]
  ad::Value* forward(ad::Tape& t, const ad::Tensor& input) const;
};

Model build(const ArchSpec& spec, int height, int width, uint64_t seed);

// Batched encodings of transitions for this spec. Policies read (s[,g]),
// IDMs read (s,s'[,g]); img states are rendered from the grid.
ad::Tensor encode_batch(const ArchSpec& spec, const grid::Grid& g,
                        const std::vector<data::Transition>& recs);
std::vector<int> labels_of(const std::vector<data::Transition>& recs);

// probability rows [B,4]
ad::Tensor predict(const Model& m, const ad::Tensor& input);
std::array<double, 4> predict_one(const Model& m, const grid::Grid& g,
                                  const data::Transition& rec);
double log_prob(const Model& m, const grid::Grid& g,
                const data::Transition& rec, int action);
int argmax_action(const std::array<double, 4>& probs);

// Closed-form LC IDM over (s,s'): logits = dir_a . (s'-s) / temperature.
Model analytic_idm_pos(double temperature);

// Closed-form CNN1 IDM whose kernels are motion-detector patch differences
// rendered with the project image convention.
Model analytic_idm_img(const grid::Grid& g, double temperature);

}  // namespace idm::models
