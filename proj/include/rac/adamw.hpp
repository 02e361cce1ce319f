// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "rac/tensor.hpp"

namespace rac {

struct AdamWConfig {
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float weight_decay = 1e-4f;
  float eps = 1e-8f;
};

// Decoupled-weight-decay Adam with bias correction. Moments are keyed by
// parameter name and created lazily, so the optimizer can be constructed
// before the parameter set is final.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  // One update over every trainable parameter:
  //   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
  //   p <- p - lr * ( m_hat / (sqrt(v_hat) + eps) + weight_decay * p )
  // Frozen parameters are untouched. Missing gradients for trainable
  // parameters are an error.
  void step(ParameterSet& params, const std::map<std::string, Tensor>& grads);

  const AdamWConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }

  // Serialization access (checkpoint resume must be bit-identical).
  const std::map<std::string, Eigen::ArrayXf>& first_moments() const { return m_; }
  const std::map<std::string, Eigen::ArrayXf>& second_moments() const { return v_; }
  void restore(std::int64_t step, std::map<std::string, Eigen::ArrayXf> m,
               std::map<std::string, Eigen::ArrayXf> v);

 private:
  AdamWConfig cfg_;
  std::int64_t step_ = 0;
  std::map<std::string, Eigen::ArrayXf> m_, v_;
};

}  // namespace rac
