// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rac/tensor.hpp"

namespace rac {

// Geometry of the shared state space: images live as C_s x H x W states,
// teacher latents as C x (H/f) x (W/f) arrays expanded into the same shape.
struct StateSpec {
  int C_s = 4;            // state channels
  int H = 0, W = 0;       // image extents
  int C = 4;              // teacher latent channels
  int f = 2;              // spatial factor between image and latent grids
  float pad_value = 0.5f; // fill for channels beyond the payload

  int h() const { return H / f; }
  int w() const { return W / f; }

  // Enforces C_s >= 3, C <= C_s, f | H, f | W, finite pad_value.
  void validate() const;
};

// A C_s x H x W tensor tagged with its spec. Construction checks the shape,
// so every state in a trajectory is known well-formed.
struct StateTensor {
  StateSpec spec;
  Tensor value;

  StateTensor(StateSpec sp, Tensor v);
};

// x in [0,1] -> x~ = 2x - 1. Overshoots up to 1e-3 are clamped with a
// warning; anything larger is an error.
Tensor normalize_image(const Tensor& x);

// Exact affine inverse of normalize_image (no clamping).
Tensor denormalize_image(const Tensor& x_tilde);

// Differentiable clamp to [0,1], built from relu so the usual subgradient
// (1 inside, 0 outside) falls out of existing backward rules.
Tensor clamp01(const Tensor& x);

// Copies the payload channels and fills [C, C_s) with spec.pad_value.
StateTensor pad_state(const Tensor& u, const StateSpec& spec);

// s_0 from a teacher latent: pad channels to C_s, then nearest-neighbour
// expand by f. down_state is its exact left inverse when C_s == C.
StateTensor expand_latent(const Tensor& z, const StateSpec& spec);

// First three channels mapped back to image range: clamp01((s[0:3] + 1)/2).
Tensor project_rgb(const StateTensor& s);
Tensor project_rgb(const Tensor& s_value);

enum class DownMode { AvgPool, Learned };

// Trainable 1x1 projection C_s -> C used by the learned down_state mode.
// Initialized to the channel-slice identity so it matches the avg_pool mode
// before any training.
ParameterSet make_projector(const StateSpec& spec);

// State -> latent. AvgPool: slice channels [0, C), then avg_pool2d(f).
// Learned: 1x1 conv projector, then avg_pool2d(f); requires projector params.
Tensor down_state(const Tensor& s_value, const StateSpec& spec, DownMode mode = DownMode::AvgPool,
                  const ParameterSet* projector = nullptr);
Tensor down_state(const StateTensor& s, DownMode mode = DownMode::AvgPool,
                  const ParameterSet* projector = nullptr);

}  // namespace rac
