// SPDX-License-Identifier: Apache-2.0
#include "rac/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "rac/adamw.hpp"

namespace rac {

namespace {

void require_image(const Tensor& x, const char* op) {
  if (x.shape.size() != 3 || x.shape[0] != 3)
    fail(std::string(op) + ": expected 3xHxW input, got " + shape_str(x.shape));
}

void require_range(const Tensor& x, float lo, float hi, const char* op) {
  constexpr float kSlack = 1e-3f;
  if (x.data.minCoeff() < lo - kSlack || x.data.maxCoeff() > hi + kSlack)
    fail(std::string(op) + ": values outside [" + std::to_string(lo) + "," + std::to_string(hi) +
         "]");
}

Tensor conv_block(const Tensor& x, const ParameterSet& params, const std::string& name) {
  return conv2d(x, params.at(name + ".kernel").value, params.at(name + ".bias").value);
}

}  // namespace

TeacherModel TeacherModel::analytic(TeacherConfig cfg) {
  if (cfg.mode != TeacherMode::Analytic) fail("analytic teacher: wrong mode in config");
  if (cfg.C < 3) fail("analytic teacher: needs C >= 3 to carry RGB, got " + std::to_string(cfg.C));
  if (cfg.f < 1) fail("analytic teacher: factor must be positive");
  return TeacherModel(cfg, /*frozen=*/true);
}

TeacherModel TeacherModel::learned_init(TeacherConfig cfg, std::uint64_t seed) {
  if (cfg.mode != TeacherMode::Learned) fail("learned teacher: wrong mode in config");
  if (cfg.C < 1 || cfg.hidden < cfg.C) fail("learned teacher: hidden width must be >= C");
  TeacherModel model(cfg, /*frozen=*/false);
  std::mt19937 rng = make_rng(seed, "teacher-init");
  const int h = cfg.hidden, c = cfg.C;
  auto add_conv = [&](const std::string& name, int co, int ci) {
    model.params_.add(name + ".kernel", he_normal(Shape{co, ci, 3, 3}, rng));
    model.params_.add(name + ".bias", Tensor(Shape{co}));
  };
  add_conv("teacher.enc0", h, 3);
  add_conv("teacher.enc1", h, h);
  add_conv("teacher.enc2", 2 * c, h);  // mu and logvar stacked
  add_conv("teacher.dec0", h, c);
  add_conv("teacher.dec1", h, h);
  add_conv("teacher.dec2", 3, h);
  return model;
}

void TeacherModel::freeze() {
  for (Parameter& p : params_.items()) p.trainable = false;
  frozen_ = true;
}

TeacherModel::Posterior TeacherModel::posterior(const Tensor& x_tilde) const {
  if (!is_learned()) fail("teacher posterior: analytic mode has no posterior");
  require_image(x_tilde, "teacher_encode");
  Tensor h = silu(conv_block(x_tilde, params_, "teacher.enc0"));
  h = silu(conv_block(h, params_, "teacher.enc1"));
  h = avg_pool2d(h, cfg_.f);
  Tensor both = conv_block(h, params_, "teacher.enc2");
  return Posterior{slice_channels(both, 0, cfg_.C), slice_channels(both, cfg_.C, 2 * cfg_.C)};
}

Tensor TeacherModel::encode(const Tensor& x_tilde) const {
  require_image(x_tilde, "teacher_encode");
  require_range(x_tilde, -1.0f, 1.0f, "teacher_encode");
  if (is_learned()) return posterior(x_tilde).mu;
  const int H = x_tilde.shape[1], W = x_tilde.shape[2];
  if (H % cfg_.f != 0 || W % cfg_.f != 0)
    fail("teacher_encode: factor " + std::to_string(cfg_.f) + " does not divide " +
         shape_str(x_tilde.shape));
  Tensor padded = x_tilde;
  if (cfg_.C > 3) {
    Tensor pad(Shape{cfg_.C - 3, H, W}, cfg_.pad_value);
    padded = concat_channels({x_tilde, pad});
  }
  return avg_pool2d(padded, cfg_.f);
}

Tensor TeacherModel::decode_raw(const Tensor& z_hat) const {
  if (z_hat.shape.size() != 3 || z_hat.shape[0] != cfg_.C)
    fail("teacher_decode: expected " + std::to_string(cfg_.C) + "xhxw latent, got " +
         shape_str(z_hat.shape));
  if (is_learned()) {
    Tensor d = silu(conv_block(z_hat, params_, "teacher.dec0"));
    d = upsample_nearest(d, cfg_.f);
    d = silu(conv_block(d, params_, "teacher.dec1"));
    return conv_block(d, params_, "teacher.dec2");
  }
  Tensor up = upsample_nearest(z_hat, cfg_.f);
  return denormalize_image(slice_channels(up, 0, 3));
}

Tensor TeacherModel::decode(const Tensor& z_hat) const { return clamp01(decode_raw(z_hat)); }

TeacherModel teacher_pretrain(const std::vector<Tensor>& images, const TeacherConfig& cfg,
                              const TeacherPretrainConfig& pre, std::ostream* log) {
  if (cfg.mode != TeacherMode::Learned) fail("teacher_pretrain: learned mode only");
  if (images.empty()) fail("teacher_pretrain: empty dataset");
  TeacherModel model = TeacherModel::learned_init(cfg, pre.seed);

  AdamWConfig opt_cfg;
  opt_cfg.lr = pre.lr;
  opt_cfg.weight_decay = pre.weight_decay;
  AdamW opt(opt_cfg);

  std::mt19937 shuffle_rng = make_rng(pre.seed, "teacher-batches");
  std::mt19937 noise_rng = make_rng(pre.seed, "teacher-posterior-noise");
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0u);
  const int batch = std::min<int>(pre.batch_size, static_cast<int>(images.size()));
  std::size_t cursor = order.size();  // trigger shuffle on first use

  if (log) *log << "iter,recon,kl,total\n";
  for (int iter = 0; iter < pre.iterations; ++iter) {
    GradientTape tape;
    model.params().watch_all(tape);
    Tensor recon_sum = Tensor::scalar(0.0f);
    Tensor kl_sum = Tensor::scalar(0.0f);
    for (int b = 0; b < batch; ++b) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        cursor = 0;
      }
      const Tensor& x = images[order[cursor++]];
      Tensor x_tilde = normalize_image(x);
      TeacherModel::Posterior post = model.posterior(x_tilde);
      Tensor eps = randn(post.mu.shape, noise_rng);
      Tensor z = add(post.mu, mul(exp(scale(post.logvar, 0.5f)), eps));
      Tensor recon = reduce_mean_sq(model.decode_raw(z), x);
      // KL(N(mu, e^lv) || N(0,1)) per element = 0.5 (mu^2 + e^lv - lv - 1)
      Tensor kl_elem = add(sub(add(mul(post.mu, post.mu), exp(post.logvar)), post.logvar), -1.0f);
      Tensor kl = scale(reduce_mean(kl_elem), 0.5f);
      recon_sum = add(recon_sum, recon);
      kl_sum = add(kl_sum, kl);
    }
    const float inv_b = 1.0f / static_cast<float>(batch);
    Tensor recon_mean = scale(recon_sum, inv_b);
    Tensor kl_mean = scale(kl_sum, inv_b);
    Tensor total = add(recon_mean, scale(kl_mean, cfg.kl_weight));
    if (!total.all_finite())
      fail("teacher_pretrain: non-finite loss at iteration " + std::to_string(iter));
    auto grads = backward(total, tape, model.params());
    opt.step(model.params(), grads);
    if (log)
      *log << iter << ',' << recon_mean.item() << ',' << kl_mean.item() << ',' << total.item()
           << '\n';
  }
  model.freeze();
  return model;
}

}  // namespace rac
