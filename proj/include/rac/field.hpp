// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rac/tensor.hpp"

namespace rac {

struct FieldConfig {
  int C_s = 4;               // state channels in and out
  int width = 32;            // hidden conv channels
  int depth = 2;             // conv blocks per stage
  int down_factor = 2;       // internal hourglass bottleneck factor
  bool use_pos_enc = true;   // two linear coordinate planes
  bool zero_init_head = true;  // v == 0 at init => identity flow

  int input_channels() const { return C_s + 1 + (use_pos_enc ? 2 : 0); }
  void validate() const;
};

// Network input: state channels, a constant plane holding t, and optionally
// two coordinate planes linear in [-1,1] across height/width (0 when the
// extent is 1). Errors when t is outside [0,1].
Tensor assemble_input(const Tensor& s_value, float t, const FieldConfig& cfg);

// The time-conditioned velocity v_theta(s, t). One parameter set, used
// identically by forward (decode) and reverse (encode) integration.
// Body: depth SiLU conv blocks at full resolution, avg-pool by down_factor,
// depth more blocks, nearest upsample, skip-add, then a conv head back to
// C_s channels. The head is zero-initialized by default so the initial flow
// is the identity map.
class VelocityField {
 public:
  VelocityField(FieldConfig cfg, std::uint64_t seed);

  const FieldConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // s_value: C_s x H x W with down_factor | H, W. Returns C_s x H x W.
  Tensor eval(const Tensor& s_value, float t) const;

 private:
  FieldConfig cfg_;
  ParameterSet params_;
};

// Spec-vocabulary alias for VelocityField::eval.
inline Tensor velocity_eval(const VelocityField& field, const Tensor& s_value, float t) {
  return field.eval(s_value, t);
}

}  // namespace rac
