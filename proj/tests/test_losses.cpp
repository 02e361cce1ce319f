// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "rac/losses.hpp"
#include "test_util.hpp"

using namespace rac;
using ractest::random_tensor;

namespace {

const VelocityFn kZeroField = [](const Tensor& s, float) { return Tensor(s.shape); };
const VelocityFn kLinearField = [](const Tensor& s, float) { return s; };

IntegrationOptions quiet(int K) {
  IntegrationOptions opt;
  opt.K = K;
  opt.noise_sigma = 0.0f;
  return opt;
}

}  // namespace

TEST_CASE("loss_recon fixed point and scalar example") {
  std::mt19937 rng(151);
  Tensor s = random_tensor({2, 2, 2}, rng);
  Trajectory traj = integrate_forward(kZeroField, s, make_uniform_grid(2), quiet(2));
  CHECK(loss_recon(traj, s).item() == 0.0f);

  // scalar state, s_K = 1, s* = 0 -> 1
  Trajectory one =
      integrate_forward(kZeroField, Tensor::scalar(1.0f), make_uniform_grid(1), quiet(1));
  CHECK(loss_recon(one, Tensor::scalar(0.0f)).item() == 1.0f);
}

TEST_CASE("loss_recon sends no gradient into the target") {
  std::mt19937 rng(157);
  Tensor s0 = random_tensor({2, 2, 2}, rng);
  Tensor target = random_tensor({2, 2, 2}, rng);
  GradientTape tape;
  tape.watch(s0);
  tape.watch(target);
  Trajectory traj = integrate_forward(kLinearField, s0, make_uniform_grid(2), quiet(2));
  Tensor loss = loss_recon(traj, target);
  tape.backward(loss);
  CHECK(tape.grad(target).abs().maxCoeff() == 0.0f);
  CHECK(tape.grad(s0).abs().maxCoeff() > 0.0f);
}

TEST_CASE("loss_path measures deviation from the chord") {
  Tensor s_star = Tensor::scalar(1.0f);

  // trajectory exactly on the chord: zero
  Trajectory on_chord;
  on_chord.grid = make_uniform_grid(4);
  for (int k = 0; k <= 4; ++k)
    on_chord.states.push_back(Tensor::scalar(static_cast<float>(k) / 4.0f));
  CHECK(loss_path(on_chord, s_star).item() == 0.0f);

  // scalar, K=2, s_0=0, s*=1, s_1=0.7 -> (0.7-0.5)^2 = 0.04
  Trajectory t2;
  t2.grid = make_uniform_grid(2);
  t2.states = {Tensor::scalar(0.0f), Tensor::scalar(0.7f), Tensor::scalar(1.0f)};
  CHECK(loss_path(t2, s_star).item() == doctest::Approx(0.04).epsilon(1e-6));

  // K=1: no interior points, empty-sum convention
  Trajectory t1;
  t1.grid = make_uniform_grid(1);
  t1.states = {Tensor::scalar(0.0f), Tensor::scalar(1.0f)};
  CHECK(loss_path(t1, s_star).item() == 0.0f);
}

TEST_CASE("loss_path uses literal k/K chord weights even on random grids") {
  std::mt19937 rng(163);
  Trajectory traj;
  traj.grid = sample_random_grid(4, rng);
  traj.states = {Tensor::scalar(0.0f), Tensor::scalar(0.3f), Tensor::scalar(0.6f),
                 Tensor::scalar(0.9f), Tensor::scalar(1.0f)};
  // chord targets sit at k/K = 0.25, 0.5, 0.75 regardless of the grid nodes
  const double expect =
      ((0.3 - 0.25) * (0.3 - 0.25) + (0.6 - 0.5) * (0.6 - 0.5) + (0.9 - 0.75) * (0.9 - 0.75)) /
      3.0;
  CHECK(loss_path(traj, Tensor::scalar(1.0f)).item() == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("loss_latent examples") {
  std::mt19937 rng(167);
  Tensor z = random_tensor({4, 2, 2}, rng);
  CHECK(loss_latent(z, z).item() == 0.0f);
  CHECK(loss_latent(Tensor::scalar(2.0f), Tensor::scalar(1.0f)).item() == 1.0f);
  CHECK_THROWS(loss_latent(z, Tensor(Shape{4, 1, 1})));
}

TEST_CASE("loss_pixel fixed points with the analytic teacher") {
  TeacherModel teacher = TeacherModel::analytic(TeacherConfig{});

  // constant-0.5 image, zero latent -> 0 (the codec's midpoint)
  Tensor x(Shape{3, 4, 4}, 0.5f);
  Tensor z0(Shape{4, 2, 2});
  CHECK(loss_pixel(teacher, z0, x).item() == 0.0f);

  // block-constant dyadic image: decode(encode(x~)) == x exactly
  Tensor xb(Shape{3, 4, 4});
  int block = 0;
  for (int c = 0; c < 3; ++c)
    for (int bi = 0; bi < 2; ++bi)
      for (int bj = 0; bj < 2; ++bj) {
        const float v = static_cast<float>(5 * block++ + 3) / 64.0f;
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj)
            xb.data[(c * 4 + 2 * bi + di) * 4 + 2 * bj + dj] = v;
      }
  Tensor zb = teacher.encode(normalize_image(xb));
  CHECK(loss_pixel(teacher, zb, xb).item() == 0.0f);
}

TEST_CASE("loss_pixel gradient w.r.t. the latent matches finite differences") {
  TeacherModel teacher = TeacherModel::analytic(TeacherConfig{});
  std::mt19937 rng(173);
  // latents inside (-0.9, 0.9) decode strictly inside (0,1): the clamp kinks
  // stay out of reach of the eps=1e-3 stencil
  Tensor z = random_tensor({4, 2, 2}, rng, -0.9f, 0.9f);
  Tensor x = random_tensor({3, 4, 4}, rng, 0.0f, 1.0f);

  Eigen::ArrayXf ad;
  {
    GradientTape tape;
    tape.watch(z);
    Tensor loss = loss_pixel(teacher, z, x);
    tape.backward(loss);
    ad = tape.grad(z);
  }
  const float eps = 1e-3f;
  double max_err = 0.0, max_fd = 0.0;
  for (std::int64_t i = 0; i < z.size(); ++i) {
    const float orig = z.data[i];
    z.data[i] = orig + eps;
    const double fp = loss_pixel(teacher, z, x).item();
    z.data[i] = orig - eps;
    const double fm = loss_pixel(teacher, z, x).item();
    z.data[i] = orig;
    const double fd = (fp - fm) / (2.0 * eps);
    max_err = std::max(max_err, std::abs(fd - static_cast<double>(ad[i])));
    max_fd = std::max(max_fd, std::abs(fd));
  }
  CHECK(max_err / max_fd < 1e-3);
}

TEST_CASE("loss_roundtrip fixed points and the linear-field value") {
  std::mt19937 rng(179);
  Tensor s_star = random_tensor({2, 2, 2}, rng);
  TimeGrid grid = make_uniform_grid(4);

  CHECK(loss_roundtrip(kZeroField, s_star, grid).item() == 0.0f);

  Tensor c = random_tensor({2, 2, 2}, rng);
  const VelocityFn const_field = [&](const Tensor&, float) { return c.detached(); };
  CHECK(loss_roundtrip(const_field, s_star, grid).item() < 1e-6f);

  // linear field v = s, scalar s* = 1: rt state (15/16)^4, loss (rt-1)^2
  const float val = loss_roundtrip(kLinearField, Tensor::scalar(1.0f), grid).item();
  CHECK(val == doctest::Approx(0.0517670817).epsilon(1e-5));
}

TEST_CASE("loss_mean_velocity on hand-built fields") {
  std::mt19937 rng(181);
  Tensor s = random_tensor({2, 2, 2}, rng);

  // time-independent field: the time derivative vanishes, loss exactly 0
  CHECK(loss_mean_velocity(kLinearField, s, 0.5f).item() == 0.0f);

  // v(s,t) = t*c: at t=0.5 the target is v - t*dv = 0.5c - 0.5c = 0,
  // so the loss is mean-sq(0.5c)
  Tensor c = random_tensor({2, 2, 2}, rng);
  const VelocityFn ramp = [&](const Tensor&, float t) { return scale(c, t); };
  const float loss = loss_mean_velocity(ramp, s, 0.5f).item();
  const float expect = 0.25f * static_cast<float>(c.data.square().mean());
  CHECK(loss == doctest::Approx(expect).epsilon(1e-2));

  // boundary times fall back to one-sided stencils; t outside [0,1] rejected
  CHECK_NOTHROW(loss_mean_velocity(ramp, s, 0.0f));
  CHECK_NOTHROW(loss_mean_velocity(ramp, s, 1.0f));
  CHECK_THROWS(loss_mean_velocity(ramp, s, 1.5f));
}

TEST_CASE("total_loss mirrors the weighted sum") {
  LossTerms terms;
  terms.recon = Tensor::scalar(1.0f);
  terms.path = Tensor::scalar(1.0f);
  terms.latent = Tensor::scalar(1.0f);
  terms.pixel = Tensor::scalar(1.0f);
  terms.rt = Tensor::scalar(1.0f);

  // default weights, all terms 1 -> 1 + 0.1 + 1 + 1 + 1 = 4.1
  LossWeights w;
  LossReport report;
  Tensor total = total_loss(terms, w, &report);
  CHECK(total.item() == doctest::Approx(4.1).epsilon(1e-6));
  CHECK(report.total == total.item());
  CHECK(report.mv == 0.0f);

  // the report rows recombine to the total
  const float recombined = report.recon + w.path * report.path + w.latent * report.latent +
                           w.pixel * report.pixel + w.rt * report.rt + w.mv * report.mv;
  CHECK(report.total == doctest::Approx(recombined).epsilon(1e-6));

  // all side weights zero -> total == recon
  LossWeights zero;
  zero.path = zero.latent = zero.pixel = zero.rt = zero.mv = 0.0f;
  CHECK(total_loss(terms, zero).item() == 1.0f);

  // negative weight rejected; positive mv weight demands the computed term
  LossWeights bad;
  bad.path = -0.1f;
  CHECK_THROWS(total_loss(terms, bad));
  LossWeights with_mv;
  with_mv.mv = 0.5f;
  CHECK_THROWS(total_loss(terms, with_mv));
  terms.mv = Tensor::scalar(2.0f);
  CHECK(total_loss(terms, with_mv).item() == doctest::Approx(5.1).epsilon(1e-6));
}

TEST_CASE("gradient of the total is the weighted sum of term gradients") {
  std::mt19937 rng(191);
  const TimeGrid grid = make_uniform_grid(2);
  const Tensor s_star = random_tensor({2, 2, 2}, rng);
  const Tensor s0 = random_tensor({2, 2, 2}, rng);
  const Tensor wbase = random_tensor({2, 2, 2}, rng, 0.1f, 0.5f);

  // v(s,t) = w (.) s with a watched full-shape parameter w; recon/path share
  // the forward trajectory, rt builds its own round trip through the same w
  auto grads_for = [&](float w_path, float w_rt) {
    GradientTape tape;
    Tensor w = wbase.detached();
    tape.watch(w);
    const VelocityFn vf = [&](const Tensor& s, float) { return mul(s, w); };
    Trajectory traj = integrate_forward(vf, s0.detached(), grid, quiet(2));
    LossTerms terms;
    terms.recon = loss_recon(traj, s_star);
    terms.path = loss_path(traj, s_star);
    terms.latent = Tensor::scalar(0.0f);
    terms.pixel = Tensor::scalar(0.0f);
    terms.rt = loss_roundtrip(vf, s_star, grid);
    LossWeights lw;
    lw.path = w_path;
    lw.rt = w_rt;
    lw.latent = lw.pixel = 0.0f;
    Tensor total = total_loss(terms, lw);
    tape.backward(total);
    return tape.grad(w);
  };

  const Eigen::ArrayXf g_recon = grads_for(0.0f, 0.0f);
  const Eigen::ArrayXf g_path = grads_for(1.0f, 0.0f) - g_recon;
  const Eigen::ArrayXf g_rt = grads_for(0.0f, 1.0f) - g_recon;
  const Eigen::ArrayXf g_mix = grads_for(0.1f, 1.0f);
  const Eigen::ArrayXf expect = g_recon + 0.1f * g_path + 1.0f * g_rt;
  const float err = (g_mix - expect).abs().maxCoeff();
  const float ref = expect.abs().maxCoeff();
  CHECK(err / std::max(ref, 1e-12f) < 1e-4);
}
