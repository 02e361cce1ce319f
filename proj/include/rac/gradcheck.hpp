// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rac/trainer.hpp"

namespace rac {

struct GradCheckCase {
  std::string name;
  double rel_err = 0.0;
  double tolerance = 1e-3;
  bool pass = false;
};

// Central finite differences (ε = 1e-3) against reverse-mode gradients for
// `op` over `inputs`. The op output is probed with a fixed random linear
// functional so every output coordinate participates; the result is the
// worst |ad - fd| normalized by the largest |fd| seen.
double gradcheck_rel_err(const std::function<Tensor(const std::vector<Tensor>&)>& op,
                         std::vector<Tensor> inputs, std::uint64_t probe_seed,
                         float eps = 1e-3f);

// One case per autodiff primitive plus the differentiable state and field
// composites, each on small seeded inputs.
std::vector<GradCheckCase> gradcheck_ops(std::uint64_t seed);

// The full per-iteration training loss (default config on an 8x8 state,
// K = 2), finite-differenced over a seeded subsample of parameter
// coordinates. batch_loss is pure in (parameters, batch, iteration), so
// the noisy loss is re-evaluated with identical draws.
GradCheckCase gradcheck_iteration_loss(std::uint64_t seed, int coord_samples = 192);

// gradcheck_ops + gradcheck_iteration_loss, in that order.
std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed);

}  // namespace rac
