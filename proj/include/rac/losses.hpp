// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rac/integrate.hpp"
#include "rac/teacher.hpp"
#include "rac/tensor.hpp"

namespace rac {

struct LossWeights {
  float path = 0.1f;
  float latent = 1.0f;
  float pixel = 1.0f;
  float rt = 1.0f;
  float mv = 0.0f;  // mean-velocity term is optional

  void validate() const;  // all weights >= 0
};

// Scalar values of each term plus the weighted total, one row per iteration.
struct LossReport {
  float recon = 0.0f, path = 0.0f, latent = 0.0f, pixel = 0.0f, rt = 0.0f, mv = 0.0f;
  float total = 0.0f;
};

// mean-sq(s_K - s*); the target is detached (it is data).
Tensor loss_recon(const Trajectory& traj, const Tensor& s_star);

// (1/(K-1)) sum_{k=1}^{K-1} mean-sq(s_k - chord_k) with
// chord_k = s_0 + (k/K) (s* - s_0). The literal k/K weighting applies even
// on random grids. K < 2 returns 0 (no interior points), warning once.
Tensor loss_path(const Trajectory& traj, const Tensor& s_star);

// mean-sq(z_hat - z_T); z_T detached (teacher frozen).
Tensor loss_latent(const Tensor& z_hat, const Tensor& z_T);

// mean-sq(Dec_T(z_hat) - x). Gradients flow through the frozen decoder into
// z_hat only.
Tensor loss_pixel(const TeacherModel& teacher, const Tensor& z_hat, const Tensor& x);

// mean-sq(Flow(Flow^{-1}(s*)) - s*), both passes noise-free on `grid`.
// detach_inner cuts gradients between the reverse and forward pass.
Tensor loss_roundtrip(const VelocityFn& v, const Tensor& s_star, const TimeGrid& grid,
                      bool detach_inner = false);
Tensor loss_roundtrip(const VelocityField& field, const Tensor& s_star, const TimeGrid& grid,
                      bool detach_inner = false);

// mean-sq(v(s,t) - target) with target = detach(v(s,t)) - t * detach(d_t v),
// the time derivative taken by central differences with step eps_t (clamped
// so t +- eps_t stays inside [0,1]).
Tensor loss_mean_velocity(const VelocityFn& v, const Tensor& s_t, float t, float eps_t = 1e-3f);
Tensor loss_mean_velocity(const VelocityField& field, const Tensor& s_t, float t,
                          float eps_t = 1e-3f);

// Tracked scalar terms of one iteration. `mv` may be left empty when the
// term is off.
struct LossTerms {
  Tensor recon, path, latent, pixel, rt;
  Tensor mv;  // size 0 when unused
};

// total = recon + w.path*path + w.latent*latent + w.pixel*pixel + w.rt*rt
// [+ w.mv*mv]. Fills `report` with every term and the total.
Tensor total_loss(const LossTerms& terms, const LossWeights& weights, LossReport* report = nullptr);

}  // namespace rac
