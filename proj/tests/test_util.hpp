// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "rac/tensor.hpp"

namespace ractest {

inline rac::Tensor random_tensor(rac::Shape shape, std::mt19937& rng, float lo = -1.0f,
                                 float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  rac::Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = d(rng);
  return t;
}

// Random values bounded away from zero, so kinked ops (relu) and central
// differences at eps=1e-3 never straddle the kink.
inline rac::Tensor random_tensor_offzero(rac::Shape shape, std::mt19937& rng) {
  std::uniform_real_distribution<float> mag(0.1f, 1.0f);
  std::bernoulli_distribution sign(0.5);
  rac::Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = (sign(rng) ? 1.0f : -1.0f) * mag(rng);
  return t;
}

// Central finite-difference check of reverse-mode gradients for an op that
// maps `inputs` to one tensor. The op output is probed with a fixed random
// linear functional so every output coordinate participates. Returns the
// worst |ad - fd| / max|fd| over all coordinates of all checked inputs.
inline double fd_rel_err(const std::function<rac::Tensor(const std::vector<rac::Tensor>&)>& op,
                         std::vector<rac::Tensor> inputs, std::uint64_t probe_seed,
                         float eps = 1e-3f) {
  using rac::Tensor;
  Tensor y0 = op(inputs);
  std::mt19937 rng(static_cast<std::uint32_t>(probe_seed));
  std::uniform_real_distribution<float> wd(-1.0f, 1.0f);
  Tensor weights(y0.shape);
  for (std::int64_t i = 0; i < weights.size(); ++i) weights.data[i] = wd(rng);

  // probe(y) = mean(weights ⊙ y), accumulated in double to keep the
  // difference quotient clean at eps=1e-3 in 32-bit.
  auto probe = [&](const Tensor& y) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < y.size(); ++i)
      acc += static_cast<double>(weights.data[i]) * static_cast<double>(y.data[i]);
    return acc / static_cast<double>(y.size());
  };

  std::vector<Eigen::ArrayXf> ad;
  {
    rac::GradientTape tape;
    for (Tensor& t : inputs) tape.watch(t);
    Tensor y = op(inputs);
    Tensor loss = rac::reduce_mean(rac::mul(y, weights));
    tape.backward(loss);
    for (Tensor& t : inputs) ad.push_back(tape.grad(t));
  }

  double max_abs_err = 0.0, max_fd = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::int64_t i = 0; i < inputs[k].size(); ++i) {
      const float orig = inputs[k].data[i];
      inputs[k].data[i] = orig + eps;
      const double fp = probe(op(inputs));
      inputs[k].data[i] = orig - eps;
      const double fm = probe(op(inputs));
      inputs[k].data[i] = orig;
      const double fd = (fp - fm) / (2.0 * static_cast<double>(eps));
      max_abs_err = std::max(max_abs_err, std::abs(static_cast<double>(ad[k][i]) - fd));
      max_fd = std::max(max_fd, std::abs(fd));
    }
  }
  return max_abs_err / std::max(max_fd, 1e-12);
}

// Brute-force symmetric eigensolver (cyclic Jacobi rotations), independent
// of the library's solver. Returns eigenvalues sorted descending; small
// inputs only.
inline Eigen::VectorXd jacobi_eigenvalues(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-24) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(n, n);
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = s;
        rot(q, p) = -s;
        a = rot.transpose() * a * rot;
      }
    }
  }
  Eigen::VectorXd evals = a.diagonal();
  std::sort(evals.data(), evals.data() + n, std::greater<double>());
  return evals;
}

}  // namespace ractest
