// SPDX-License-Identifier: Apache-2.0
#include "rac/state.hpp"

#include <cmath>
#include <iostream>

namespace rac {

void StateSpec::validate() const {
  if (C_s < 3) fail("state spec: C_s must be >= 3, got " + std::to_string(C_s));
  if (C < 1 || C > C_s)
    fail("state spec: latent channels C=" + std::to_string(C) + " must be in [1, C_s=" +
         std::to_string(C_s) + "]");
  if (H < 1 || W < 1) fail("state spec: image extents must be positive");
  if (f < 1 || H % f != 0 || W % f != 0)
    fail("state spec: factor " + std::to_string(f) + " must divide " + std::to_string(H) + "x" +
         std::to_string(W));
  if (!std::isfinite(pad_value)) fail("state spec: pad_value must be finite");
}

StateTensor::StateTensor(StateSpec sp, Tensor v) : spec(sp), value(std::move(v)) {
  const Shape want{spec.C_s, spec.H, spec.W};
  if (!same_shape(value.shape, want))
    fail("state tensor: expected " + shape_str(want) + ", got " + shape_str(value.shape));
}

Tensor normalize_image(const Tensor& x) {
  if (x.shape.size() != 3 || x.shape[0] != 3)
    fail("normalize_image: expected 3xHxW image, got " + shape_str(x.shape));
  const float lo = x.data.minCoeff(), hi = x.data.maxCoeff();
  constexpr float kSlack = 1e-3f;
  if (lo < -kSlack || hi > 1.0f + kSlack)
    fail("normalize_image: values outside [0,1] (min " + std::to_string(lo) + ", max " +
         std::to_string(hi) + ")");
  Tensor in = x;
  if (lo < 0.0f || hi > 1.0f) {
    std::cerr << "normalize_image: clamping slight overshoot (min " << lo << ", max " << hi
              << ")\n";
    in.data = in.data.max(0.0f).min(1.0f);
    in.node = -1;  // clamped copy is a fresh constant
  }
  return sub(scale(in, 2.0f), 1.0f);
}

Tensor denormalize_image(const Tensor& x_tilde) { return scale(add(x_tilde, 1.0f), 0.5f); }

Tensor clamp01(const Tensor& x) { return sub(relu(x), relu(add(x, -1.0f))); }

StateTensor pad_state(const Tensor& u, const StateSpec& spec) {
  spec.validate();
  if (u.shape.size() != 3 || u.shape[1] != spec.H || u.shape[2] != spec.W)
    fail("pad_state: expected Cx" + std::to_string(spec.H) + "x" + std::to_string(spec.W) +
         ", got " + shape_str(u.shape));
  const int c = u.shape[0];
  if (c > spec.C_s)
    fail("pad_state: " + std::to_string(c) + " channels exceed C_s=" + std::to_string(spec.C_s));
  if (c == spec.C_s) return StateTensor(spec, u);
  Tensor pad(Shape{spec.C_s - c, spec.H, spec.W}, spec.pad_value);
  return StateTensor(spec, concat_channels({u, pad}));
}

StateTensor expand_latent(const Tensor& z, const StateSpec& spec) {
  spec.validate();
  if (z.shape.size() != 3 || z.shape[0] != spec.C)
    fail("expand_latent: expected " + std::to_string(spec.C) + "xhxw latent, got " +
         shape_str(z.shape));
  if (z.shape[1] * spec.f != spec.H || z.shape[2] * spec.f != spec.W)
    fail("expand_latent: factor mismatch, latent " + shape_str(z.shape) + " with f=" +
         std::to_string(spec.f) + " does not cover " + std::to_string(spec.H) + "x" +
         std::to_string(spec.W));
  const int c = z.shape[0];
  Tensor padded = z;
  if (c < spec.C_s) {
    Tensor pad(Shape{spec.C_s - c, z.shape[1], z.shape[2]}, spec.pad_value);
    padded = concat_channels({z, pad});
  }
  return StateTensor(spec, upsample_nearest(padded, spec.f));
}

Tensor project_rgb(const Tensor& s_value) {
  if (s_value.shape.size() != 3 || s_value.shape[0] < 3)
    fail("project_rgb: need at least 3 channels, got " + shape_str(s_value.shape));
  return clamp01(denormalize_image(slice_channels(s_value, 0, 3)));
}

Tensor project_rgb(const StateTensor& s) { return project_rgb(s.value); }

ParameterSet make_projector(const StateSpec& spec) {
  spec.validate();
  ParameterSet params;
  Tensor kernel(Shape{spec.C, spec.C_s, 1, 1});
  for (int c = 0; c < spec.C; ++c) kernel.data[c * spec.C_s + c] = 1.0f;
  params.add("projector.kernel", std::move(kernel));
  params.add("projector.bias", Tensor(Shape{spec.C}));
  return params;
}

Tensor down_state(const Tensor& s_value, const StateSpec& spec, DownMode mode,
                  const ParameterSet* projector) {
  spec.validate();
  const Shape want{spec.C_s, spec.H, spec.W};
  if (!same_shape(s_value.shape, want))
    fail("down_state: expected " + shape_str(want) + ", got " + shape_str(s_value.shape));
  if (mode == DownMode::AvgPool)
    return avg_pool2d(slice_channels(s_value, 0, spec.C), spec.f);
  if (!projector || !projector->contains("projector.kernel"))
    fail("down_state: learned mode requires projector weights");
  const Tensor projected = conv2d(s_value, projector->at("projector.kernel").value,
                                  projector->at("projector.bias").value);
  return avg_pool2d(projected, spec.f);
}

Tensor down_state(const StateTensor& s, DownMode mode, const ParameterSet* projector) {
  return down_state(s.value, s.spec, mode, projector);
}

}  // namespace rac
