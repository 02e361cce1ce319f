// SPDX-License-Identifier: Apache-2.0
#include "rac/losses.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>

namespace rac {

void LossWeights::validate() const {
  if (path < 0.0f || latent < 0.0f || pixel < 0.0f || rt < 0.0f || mv < 0.0f)
    fail("loss weights must be nonnegative");
}

Tensor loss_recon(const Trajectory& traj, const Tensor& s_star) {
  if (traj.direction != Direction::Forward) fail("loss_recon: needs a forward trajectory");
  if (traj.states.empty()) fail("loss_recon: empty trajectory");
  return reduce_mean_sq(traj.states.back(), s_star.detached());
}

Tensor loss_path(const Trajectory& traj, const Tensor& s_star) {
  const int K = traj.grid.K();
  if (K < 2) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      std::cerr << "loss_path: K < 2 leaves no interior points; returning 0\n";
    return Tensor::scalar(0.0f);
  }
  const Tensor& s0 = traj.states.front();
  const Tensor target = s_star.detached();
  Tensor chord_dir = sub(target, s0);
  Tensor acc = Tensor::scalar(0.0f);
  for (int k = 1; k < K; ++k) {
    const float a = static_cast<float>(k) / static_cast<float>(K);
    Tensor chord = add(s0, scale(chord_dir, a));
    acc = add(acc, reduce_mean_sq(traj.states[k], chord));
  }
  return scale(acc, 1.0f / static_cast<float>(K - 1));
}

Tensor loss_latent(const Tensor& z_hat, const Tensor& z_T) {
  return reduce_mean_sq(z_hat, z_T.detached());
}

Tensor loss_pixel(const TeacherModel& teacher, const Tensor& z_hat, const Tensor& x) {
  return reduce_mean_sq(teacher.decode(z_hat), x.detached());
}

Tensor loss_roundtrip(const VelocityFn& v, const Tensor& s_star, const TimeGrid& grid,
                      bool detach_inner) {
  IntegrationOptions opt;
  opt.K = grid.K();
  opt.noise_sigma = 0.0f;
  Trajectory rev = integrate_reverse(v, s_star, grid, opt);
  Tensor s0_hat = detach_inner ? rev.states.front().detached() : rev.states.front();
  Trajectory fwd = integrate_forward(v, s0_hat, grid, opt);
  return reduce_mean_sq(fwd.states.back(), s_star.detached());
}

Tensor loss_roundtrip(const VelocityField& field, const Tensor& s_star, const TimeGrid& grid,
                      bool detach_inner) {
  return loss_roundtrip([&field](const Tensor& s, float t) { return field.eval(s, t); }, s_star,
                        grid, detach_inner);
}

Tensor loss_mean_velocity(const VelocityFn& v, const Tensor& s_t, float t, float eps_t) {
  if (eps_t <= 0.0f) fail("loss_mean_velocity: eps_t must be positive");
  if (t < 0.0f || t > 1.0f) fail("loss_mean_velocity: t outside [0,1]");
  Tensor v_pred = v(s_t, t);
  Tensor v_bar = v_pred.detached();
  const float t_hi = std::min(t + eps_t, 1.0f);
  const float t_lo = std::max(t - eps_t, 0.0f);
  const Tensor s_const = s_t.detached();
  Tensor dv = scale(sub(v(s_const, t_hi).detached(), v(s_const, t_lo).detached()),
                    1.0f / (t_hi - t_lo));
  Tensor target = sub(v_bar, scale(dv, t));  // all-constant chain
  return reduce_mean_sq(v_pred, target);
}

Tensor loss_mean_velocity(const VelocityField& field, const Tensor& s_t, float t, float eps_t) {
  return loss_mean_velocity([&field](const Tensor& s, float tt) { return field.eval(s, tt); },
                            s_t, t, eps_t);
}

Tensor total_loss(const LossTerms& terms, const LossWeights& weights, LossReport* report) {
  weights.validate();
  Tensor total = terms.recon;
  total = add(total, scale(terms.path, weights.path));
  total = add(total, scale(terms.latent, weights.latent));
  total = add(total, scale(terms.pixel, weights.pixel));
  total = add(total, scale(terms.rt, weights.rt));
  const bool use_mv = weights.mv > 0.0f;
  if (use_mv) {
    if (terms.mv.size() != 1) fail("total_loss: mv weight is set but the term was not computed");
    total = add(total, scale(terms.mv, weights.mv));
  }
  if (report) {
    report->recon = terms.recon.item();
    report->path = terms.path.item();
    report->latent = terms.latent.item();
    report->pixel = terms.pixel.item();
    report->rt = terms.rt.item();
    report->mv = use_mv ? terms.mv.item() : 0.0f;
    report->total = total.item();
  }
  return total;
}

}  // namespace rac
