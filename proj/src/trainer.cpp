// SPDX-License-Identifier: Apache-2.0
#include "rac/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "rac/state.hpp"

namespace rac {

void AdamW::step(ParameterSet& params, const std::map<std::string, Tensor>& grads) {
  ++step_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_));
  for (Parameter& p : params.items()) {
    if (!p.trainable) continue;
    const auto it = grads.find(p.name);
    if (it == grads.end()) fail("adamw_step: missing gradient for trainable parameter " + p.name);
    const Eigen::ArrayXf& g = it->second.data;
    if (g.size() != p.value.size())
      fail("adamw_step: gradient shape mismatch for " + p.name);
    Eigen::ArrayXf& m = m_[p.name];
    Eigen::ArrayXf& v = v_[p.name];
    if (m.size() == 0) m = Eigen::ArrayXf::Zero(g.size());
    if (v.size() == 0) v = Eigen::ArrayXf::Zero(g.size());
    m = cfg_.beta1 * m + (1.0f - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0f - cfg_.beta2) * g.square();
    const Eigen::ArrayXf m_hat = m / static_cast<float>(bc1);
    const Eigen::ArrayXf v_hat = v / static_cast<float>(bc2);
    p.value.data -= cfg_.lr * (m_hat / (v_hat.sqrt() + cfg_.eps) + cfg_.weight_decay * p.value.data);
  }
}

void AdamW::restore(std::int64_t step, std::map<std::string, Eigen::ArrayXf> m,
                    std::map<std::string, Eigen::ArrayXf> v) {
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

void TrainConfig::validate() const {
  if (lr <= 0.0f) fail("train config: lr must be > 0");
  if (beta1 < 0.0f || beta1 >= 1.0f || beta2 < 0.0f || beta2 >= 1.0f)
    fail("train config: betas must lie in [0, 1)");
  if (weight_decay < 0.0f) fail("train config: weight_decay must be >= 0");
  if (K < 1) fail("train config: K must be >= 1");
  if (noise_sigma < 0.0f) fail("train config: noise_sigma must be >= 0");
  if (batch_size < 1) fail("train config: batch_size must be >= 1");
  if (iterations < 0) fail("train config: iterations must be >= 0");
  if (resolution < 2) fail("train config: resolution must be >= 2");
  weights.validate();
}

std::vector<int> batch_indices(int n_images, int batch_size, std::uint64_t seed,
                               std::int64_t iter) {
  if (n_images < batch_size) fail("dataset smaller than batch size");
  const std::int64_t per_epoch = n_images / batch_size;
  const std::int64_t epoch = iter / per_epoch;
  const std::int64_t slot = iter % per_epoch;

  std::vector<int> order(static_cast<std::size_t>(n_images));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937 rng = make_rng(seed, "epoch-" + std::to_string(epoch));
  std::shuffle(order.begin(), order.end(), rng);

  const auto first = order.begin() + static_cast<std::ptrdiff_t>(slot) * batch_size;
  return std::vector<int>(first, first + batch_size);
}

Trainer::Trainer(TrainConfig cfg, StateSpec spec, const TeacherModel& teacher,
                 VelocityField& field, std::map<std::string, std::string> config_snapshot)
    : cfg_(cfg),
      spec_(spec),
      teacher_(&teacher),
      field_(&field),
      snapshot_(std::move(config_snapshot)),
      adam_(AdamWConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay, 1e-8f}) {
  cfg_.validate();
  spec_.validate();
  if (!teacher.frozen()) fail("trainer: teacher must be frozen before training");
  if (field.config().C_s != spec_.C_s)
    fail("trainer: field C_s " + std::to_string(field.config().C_s) + " != state C_s " +
         std::to_string(spec_.C_s));
  if (teacher.config().C != spec_.C || teacher.config().f != spec_.f)
    fail("trainer: teacher latent geometry does not match the state spec");
  if (teacher.config().pad_value != spec_.pad_value)
    fail("trainer: teacher and state pad_value differ");
  if (cfg_.resolution % spec_.f != 0)
    fail("trainer: resolution must be divisible by the latent factor");
  if (cfg_.resolution % field.config().down_factor != 0)
    fail("trainer: resolution must be divisible by the field down_factor");
  if (cfg_.down_mode == DownMode::Learned && !field_->params().contains("projector.kernel"))
    field_->params().adopt(make_projector(spec_));
  teacher_digest0_ = teacher.digest();
}

Tensor Trainer::batch_loss(const std::vector<Tensor>& batch, std::int64_t iter,
                           LossReport* report) const {
  if (batch.empty()) fail("train iteration: empty batch");
  std::mt19937 rng = make_rng(cfg_.seed, "iter-" + std::to_string(iter));
  const TimeGrid grid =
      cfg_.random_grid ? sample_random_grid(cfg_.K, rng) : make_uniform_grid(cfg_.K);

  IntegrationOptions noisy;
  noisy.K = cfg_.K;
  noisy.noise_sigma = cfg_.noise_sigma;
  IntegrationOptions quiet = noisy;
  quiet.noise_sigma = 0.0f;

  const ParameterSet* proj =
      cfg_.down_mode == DownMode::Learned ? &field_->params() : nullptr;
  const bool use_mv = cfg_.weights.mv > 0.0f;
  const float inv_b = 1.0f / static_cast<float>(batch.size());

  LossTerms sums;
  for (const Tensor& x : batch) {
    if (x.shape.size() != 3 || x.shape[0] != 3 || x.shape[1] != cfg_.resolution ||
        x.shape[2] != cfg_.resolution)
      fail("train iteration: image shape " + shape_str(x.shape) + " does not match config");

    Tensor xt = normalize_image(x);
    Tensor z_T = teacher_->encode(xt);  // frozen teacher: enters as a constant
    Tensor s0 = expand_latent(z_T, spec_).value;
    Trajectory fwd = integrate_forward(*field_, s0, grid, noisy, &rng);
    Tensor s_star = pad_state(xt, spec_).value;

    Tensor l_recon = loss_recon(fwd, s_star);
    Tensor l_path = loss_path(fwd, s_star);

    Trajectory rev = integrate_reverse(*field_, s_star, grid, quiet);
    const Tensor& s0_hat = rev.states.front();
    Tensor z_hat = down_state(s0_hat, spec_, cfg_.down_mode, proj);
    Tensor l_latent = loss_latent(z_hat, z_T);
    Tensor l_pixel = loss_pixel(*teacher_, z_hat, x);

    // the reverse pass doubles as the round trip's inner leg (both legs
    // noise-free on the iteration's grid)
    Trajectory rt =
        integrate_forward(*field_, cfg_.rt_detach_inner ? s0_hat.detached() : s0_hat, grid, quiet);
    Tensor l_rt = reduce_mean_sq(rt.states.back(), s_star.detached());

    sums.recon = sums.recon.size() ? add(sums.recon, l_recon) : l_recon;
    sums.path = sums.path.size() ? add(sums.path, l_path) : l_path;
    sums.latent = sums.latent.size() ? add(sums.latent, l_latent) : l_latent;
    sums.pixel = sums.pixel.size() ? add(sums.pixel, l_pixel) : l_pixel;
    sums.rt = sums.rt.size() ? add(sums.rt, l_rt) : l_rt;
    if (use_mv) {
      const int k = static_cast<int>(rng() % static_cast<unsigned>(cfg_.K + 1));
      Tensor l_mv = loss_mean_velocity(*field_, fwd.states[k].detached(), grid.nodes[k]);
      sums.mv = sums.mv.size() ? add(sums.mv, l_mv) : l_mv;
    }
  }

  LossTerms terms;
  terms.recon = scale(sums.recon, inv_b);
  terms.path = scale(sums.path, inv_b);
  terms.latent = scale(sums.latent, inv_b);
  terms.pixel = scale(sums.pixel, inv_b);
  terms.rt = scale(sums.rt, inv_b);
  if (use_mv) terms.mv = scale(sums.mv, inv_b);
  return total_loss(terms, cfg_.weights, report);
}

namespace {

void check_finite(const LossReport& r, std::int64_t iter) {
  const std::pair<const char*, float> named[] = {{"recon", r.recon}, {"path", r.path},
                                                 {"latent", r.latent}, {"pixel", r.pixel},
                                                 {"rt", r.rt},         {"mv", r.mv},
                                                 {"total", r.total}};
  for (const auto& [name, value] : named)
    if (!std::isfinite(value))
      fail("non-finite " + std::string(name) + " loss at iteration " + std::to_string(iter));
}

}  // namespace

LossReport Trainer::train_iteration(const std::vector<Tensor>& batch) {
  GradientTape tape;
  field_->params().watch_all(tape);
  LossReport report;
  Tensor total = batch_loss(batch, iter_, &report);
  check_finite(report, iter_);
  const std::map<std::string, Tensor> grads = backward(total, tape, field_->params());
  adam_.step(field_->params(), grads);
  ++iter_;
  return report;
}

namespace {

std::string csv_row(std::int64_t iter, const LossReport& r, std::int64_t ms) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%lld\n",
                static_cast<long long>(iter), r.recon, r.path, r.latent, r.pixel, r.rt, r.mv,
                r.total, static_cast<long long>(ms));
  return buf;
}

}  // namespace

TrainRunResult Trainer::train_loop(const std::vector<Tensor>& images, const std::string& out_dir) {
  const int n = static_cast<int>(images.size());
  if (n < cfg_.batch_size) fail("dataset smaller than batch size");

  std::ofstream csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    csv.open(out_dir + "/train_log.csv", std::ios::trunc);
    if (!csv) fail("cannot open training log: " + out_dir + "/train_log.csv");
    csv << "iter,recon,path,latent,pixel,rt,mv,total,ms\n";
  }

  TrainRunResult result;
  while (iter_ < cfg_.iterations) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> idx = batch_indices(n, cfg_.batch_size, cfg_.seed, iter_);
    std::vector<Tensor> batch;
    batch.reserve(idx.size());
    for (int i : idx) batch.push_back(images[static_cast<std::size_t>(i)].detached());

    const std::int64_t it = iter_;
    const LossReport report = train_iteration(batch);
    const std::int64_t ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - t0)
                                .count();
    result.reports.push_back(report);
    if (csv.is_open()) {
      csv << csv_row(it, report, ms);
      if (!csv) fail("training log write failed");
    }
    if (cfg_.checkpoint_every > 0 && iter_ % cfg_.checkpoint_every == 0 &&
        iter_ < cfg_.iterations && !out_dir.empty())
      save_checkpoint(make_checkpoint(), out_dir + "/ckpt_" + std::to_string(iter_) + ".rack");
    if (cfg_.eval_every > 0 && on_eval && iter_ % cfg_.eval_every == 0) on_eval(iter_);
  }

  result.final_checkpoint = make_checkpoint();
  if (!out_dir.empty()) save_checkpoint(result.final_checkpoint, out_dir + "/ckpt_final.rack");
  return result;
}

Checkpoint Trainer::make_checkpoint() const {
  if (teacher_->digest() != teacher_digest0_)
    fail("frozen-teacher digest changed during training");
  Checkpoint ckpt;
  ckpt.config = snapshot_;
  for (const Parameter& p : field_->params().items())
    ckpt.params.emplace(p.name, p.value.detached());
  for (const auto& [name, m] : adam_.first_moments())
    ckpt.opt_m.emplace(name, Tensor(field_->params().at(name).value.shape, m));
  for (const auto& [name, v] : adam_.second_moments())
    ckpt.opt_v.emplace(name, Tensor(field_->params().at(name).value.shape, v));
  ckpt.opt_step = adam_.step_count();
  ckpt.iteration = iter_;
  ckpt.teacher_digest = teacher_digest0_;
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  for (const auto& [key, value] : ckpt.config) {
    if (key == "train.iterations") continue;
    const auto it = snapshot_.find(key);
    if (it != snapshot_.end() && it->second != value)
      fail("resume config mismatch at " + key + ": checkpoint '" + value + "' vs current '" +
           it->second + "'");
  }
  if (!ckpt.teacher_digest.empty() && ckpt.teacher_digest != teacher_digest0_)
    fail("resume teacher digest mismatch: the checkpoint was trained against a different teacher");

  restore_parameters(ckpt, field_->params());
  std::map<std::string, Eigen::ArrayXf> m, v;
  for (const auto& [name, t] : ckpt.opt_m) {
    if (!field_->params().contains(name)) fail("checkpoint moment for unknown parameter: " + name);
    m.emplace(name, t.data);
  }
  for (const auto& [name, t] : ckpt.opt_v) {
    if (!field_->params().contains(name)) fail("checkpoint moment for unknown parameter: " + name);
    v.emplace(name, t.data);
  }
  adam_.restore(ckpt.opt_step, std::move(m), std::move(v));
  iter_ = ckpt.iteration;
}

}  // namespace rac
