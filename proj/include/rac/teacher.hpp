// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <vector>

#include "rac/state.hpp"
#include "rac/tensor.hpp"

namespace rac {

enum class TeacherMode { Analytic, Learned };

struct TeacherConfig {
  TeacherMode mode = TeacherMode::Analytic;
  int C = 4;               // latent channels
  int f = 2;               // spatial factor
  int hidden = 16;         // conv width, learned mode
  float kl_weight = 1e-3f; // KL term weight for learned-mode pretraining
  float pad_value = 0.5f;  // analytic-mode channel padding
};

// Pretraining knobs for the learned teacher (the analytic teacher needs none).
struct TeacherPretrainConfig {
  int iterations = 600;
  int batch_size = 4;
  float lr = 1e-3f;
  float weight_decay = 1e-4f;
  std::uint64_t seed = 0;
};

// Frozen autoencoder supplying latent targets z_T = encode(x~) and pixel
// supervision decode(z). Analytic mode is a deterministic pool/upsample
// codec; learned mode is a small conv KL-autoencoder whose posterior mean
// serves as the latent.
class TeacherModel {
 public:
  // Parameter-free pooling teacher (already frozen).
  static TeacherModel analytic(TeacherConfig cfg);

  // Seeded conv KL-AE at initialization (trainable until freeze()).
  static TeacherModel learned_init(TeacherConfig cfg, std::uint64_t seed);

  const TeacherConfig& config() const { return cfg_; }
  bool is_learned() const { return cfg_.mode == TeacherMode::Learned; }
  bool frozen() const { return frozen_; }
  void freeze();

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Hex SHA-256 over the parameter payload; the frozen-teacher invariant is
  // checked against this at every checkpoint.
  std::string digest() const { return params_.digest(); }

  // x~ (3xHxW in [-1,1]) -> latent Cx(H/f)x(W/f). Learned mode returns the
  // posterior mean (no sampling at use time).
  Tensor encode(const Tensor& x_tilde) const;

  // latent -> image 3x(f*h)x(f*w), clamped to [0,1].
  Tensor decode(const Tensor& z_hat) const;

  // Pretraining internals, exposed for the objective and its tests.
  struct Posterior {
    Tensor mu, logvar;
  };
  Posterior posterior(const Tensor& x_tilde) const;  // learned mode only
  Tensor decode_raw(const Tensor& z_hat) const;      // pixel-space, unclamped

 private:
  TeacherModel(TeacherConfig cfg, bool frozen) : cfg_(cfg), frozen_(frozen) {}

  TeacherConfig cfg_;
  ParameterSet params_;  // empty in analytic mode
  bool frozen_ = false;
};

// Minimizes mean-sq(decode_raw(z) - x) + kl_weight * KL(posterior || N(0,1))
// with AdamW over seeded shuffled batches, then freezes the model. Writes
// one `iter,recon,kl,total` CSV row per iteration when `log` is given.
// NaN loss aborts with the iteration index.
TeacherModel teacher_pretrain(const std::vector<Tensor>& images, const TeacherConfig& cfg,
                              const TeacherPretrainConfig& pre, std::ostream* log = nullptr);

}  // namespace rac
