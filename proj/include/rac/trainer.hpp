// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rac/adamw.hpp"
#include "rac/checkpoint.hpp"
#include "rac/field.hpp"
#include "rac/integrate.hpp"
#include "rac/losses.hpp"
#include "rac/teacher.hpp"

namespace rac {

struct TrainConfig {
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float weight_decay = 1e-4f;
  int K = 4;
  float noise_sigma = 0.05f;
  bool random_grid = true;
  int batch_size = 2;
  int iterations = 2000;
  std::uint64_t seed = 0;
  LossWeights weights;
  int resolution = 32;  // H = W
  int eval_every = 0;        // 0 disables the eval hook
  int checkpoint_every = 0;  // 0 = final checkpoint only
  bool rt_detach_inner = false;
  DownMode down_mode = DownMode::AvgPool;

  void validate() const;
};

// Image indices making up the batch of one iteration under per-epoch seeded
// shuffles; the incomplete final batch of each epoch is dropped. Pure in
// (n_images, batch_size, seed, iter), so any iteration's batch can be
// rebuilt without replaying the ones before it.
std::vector<int> batch_indices(int n_images, int batch_size, std::uint64_t seed,
                               std::int64_t iter);

struct TrainRunResult {
  Checkpoint final_checkpoint;
  std::vector<LossReport> reports;  // one per iteration run in this call
};

// One training iteration, start to finish:
//   x~ = 2x - 1;  z_T = Enc_T(x~);  s_0 = expand(pad(z_T));
//   forward trajectory (noisy, this iteration's grid);  s* = pad(x~);
//   recon + path;  s^_0 = reverse flow from s* (noise-free, same grid);
//   z^ = down(s^_0);  latent + pixel;  round trip = forward from s^_0 on the
//   same grid;  weighted total;  backward;  AdamW.
// The round-trip term reuses the reverse pass as its inner leg: both legs
// are noise-free on the shared grid, so values and gradients are identical
// to an independent recomputation.
class Trainer {
 public:
  // `config_snapshot` is embedded verbatim in checkpoints (the CLI passes
  // the full effective config; tests may pass {}).
  Trainer(TrainConfig cfg, StateSpec spec, const TeacherModel& teacher, VelocityField& field,
          std::map<std::string, std::string> config_snapshot = {});

  // Tracked batch total for iteration `iter`, recorded on the active tape.
  // Pure in (parameters, batch, iter): per-iteration randomness is derived
  // from (seed, iter), which is what the finite-difference gradient check
  // relies on to re-evaluate the loss with identical noise.
  Tensor batch_loss(const std::vector<Tensor>& batch, std::int64_t iter,
                    LossReport* report = nullptr) const;

  // batch_loss + backward + AdamW; advances the iteration counter.
  // Non-finite losses abort with the offending term name.
  LossReport train_iteration(const std::vector<Tensor>& batch);

  // Runs until cfg.iterations, batching `images` by seeded shuffle. With a
  // non-empty out_dir writes train_log.csv (header
  // `iter,recon,path,latent,pixel,rt,mv,total,ms`), periodic ckpt_<i>.rack,
  // and ckpt_final.rack; an empty out_dir keeps everything in memory.
  TrainRunResult train_loop(const std::vector<Tensor>& images, const std::string& out_dir = "");

  // Captures parameters, optimizer moments, iteration, config snapshot, and
  // the teacher digest (re-verified against training start).
  Checkpoint make_checkpoint() const;

  // Inverse of make_checkpoint: resuming reproduces the uninterrupted run
  // bit-identically. Config snapshots must agree except train.iterations.
  void restore(const Checkpoint& ckpt);

  std::int64_t iteration() const { return iter_; }
  const TrainConfig& config() const { return cfg_; }
  const StateSpec& state_spec() const { return spec_; }
  VelocityField& field() { return *field_; }
  const AdamW& optimizer() const { return adam_; }

  // Invoked after every cfg.eval_every-th iteration when set.
  std::function<void(std::int64_t)> on_eval;

 private:
  TrainConfig cfg_;
  StateSpec spec_;
  const TeacherModel* teacher_;
  VelocityField* field_;
  std::map<std::string, std::string> snapshot_;
  std::string teacher_digest0_;
  AdamW adam_;
  std::int64_t iter_ = 0;
};

}  // namespace rac
