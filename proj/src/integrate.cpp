// SPDX-License-Identifier: Apache-2.0
#include "rac/integrate.hpp"

#include <algorithm>

namespace rac {

void TimeGrid::validate() const {
  if (nodes.size() < 2) fail("time grid: need at least nodes 0 and 1");
  if (nodes.front() != 0.0f || nodes.back() != 1.0f)
    fail("time grid: endpoints must be exactly 0 and 1");
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (nodes[i] <= nodes[i - 1]) fail("time grid: nodes must be strictly increasing");
}

TimeGrid make_uniform_grid(int K) {
  if (K < 1) fail("make_uniform_grid: K must be >= 1, got " + std::to_string(K));
  TimeGrid grid;
  grid.nodes.resize(static_cast<std::size_t>(K) + 1);
  for (int k = 0; k <= K; ++k)
    grid.nodes[k] = static_cast<float>(static_cast<double>(k) / static_cast<double>(K));
  grid.nodes.front() = 0.0f;
  grid.nodes.back() = 1.0f;
  return grid;
}

TimeGrid sample_random_grid(int K, std::mt19937& rng) {
  if (K < 1) fail("sample_random_grid: K must be >= 1, got " + std::to_string(K));
  TimeGrid grid;
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (;;) {
    grid.nodes.assign(1, 0.0f);
    for (int i = 0; i < K - 1; ++i) grid.nodes.push_back(d(rng));
    grid.nodes.push_back(1.0f);
    std::sort(grid.nodes.begin() + 1, grid.nodes.end() - 1);
    const bool strict = [&] {
      for (std::size_t i = 1; i < grid.nodes.size(); ++i)
        if (grid.nodes[i] <= grid.nodes[i - 1]) return false;
      return true;
    }();
    if (strict) return grid;  // collisions have probability zero; redraw
  }
}

namespace {

Trajectory integrate(const VelocityFn& v, const Tensor& start, const TimeGrid& grid,
                     const IntegrationOptions& options, std::mt19937* rng, Direction dir) {
  grid.validate();
  if (options.noise_sigma < 0.0f) fail("integrate: noise_sigma must be >= 0");
  std::mt19937 local;
  if (options.noise_sigma > 0.0f && !rng) {
    local = make_rng(options.rng_seed, "integration-noise");
    rng = &local;
  }
  const int K = grid.K();
  Trajectory traj;
  traj.grid = grid;
  traj.direction = dir;
  traj.states.resize(static_cast<std::size_t>(K) + 1);

  const char* name = dir == Direction::Forward ? "integrate_forward" : "integrate_reverse";
  auto step_check = [&](const Tensor& s, int k) {
    if (!s.all_finite()) fail(std::string(name) + ": non-finite state at step " + std::to_string(k));
  };

  if (dir == Direction::Forward) {
    traj.states[0] = start;
    step_check(start, 0);
    for (int k = 0; k < K; ++k) {
      const Tensor& s = traj.states[k];
      Tensor next = add(s, scale(v(s, grid.nodes[k]), grid.dt(k)));
      if (options.noise_sigma > 0.0f)
        next = add(next, randn(next.shape, *rng, options.noise_sigma));
      step_check(next, k + 1);
      traj.states[static_cast<std::size_t>(k) + 1] = std::move(next);
    }
  } else {
    traj.states[K] = start;
    step_check(start, K);
    for (int k = K - 1; k >= 0; --k) {
      const Tensor& s = traj.states[static_cast<std::size_t>(k) + 1];
      Tensor prev = sub(s, scale(v(s, grid.nodes[k + 1]), grid.dt(k)));
      if (options.noise_sigma > 0.0f)
        prev = add(prev, randn(prev.shape, *rng, options.noise_sigma));
      step_check(prev, k);
      traj.states[k] = std::move(prev);
    }
  }
  return traj;
}

VelocityFn wrap(const VelocityField& field) {
  return [&field](const Tensor& s, float t) { return field.eval(s, t); };
}

}  // namespace

Trajectory integrate_forward(const VelocityFn& v, const Tensor& s0, const TimeGrid& grid,
                             const IntegrationOptions& options, std::mt19937* rng) {
  return integrate(v, s0, grid, options, rng, Direction::Forward);
}

Trajectory integrate_reverse(const VelocityFn& v, const Tensor& sK, const TimeGrid& grid,
                             const IntegrationOptions& options, std::mt19937* rng) {
  return integrate(v, sK, grid, options, rng, Direction::Reverse);
}

Trajectory integrate_forward(const VelocityField& field, const Tensor& s0, const TimeGrid& grid,
                             const IntegrationOptions& options, std::mt19937* rng) {
  return integrate(wrap(field), s0, grid, options, rng, Direction::Forward);
}

Trajectory integrate_reverse(const VelocityField& field, const Tensor& sK, const TimeGrid& grid,
                             const IntegrationOptions& options, std::mt19937* rng) {
  return integrate(wrap(field), sK, grid, options, rng, Direction::Reverse);
}

DecodeResult decode(const VelocityField& field, const StateSpec& spec, const Tensor& z_T,
                    const IntegrationOptions& options) {
  StateTensor s0 = expand_latent(z_T, spec);
  IntegrationOptions quiet = options;
  quiet.noise_sigma = 0.0f;
  Trajectory traj = integrate_forward(field, s0.value, make_uniform_grid(options.K), quiet);
  Tensor image = project_rgb(traj.states.back());
  return DecodeResult{std::move(image), std::move(traj)};
}

EncodeResult encode(const VelocityField& field, const StateSpec& spec, const Tensor& x,
                    const IntegrationOptions& options, DownMode mode,
                    const ParameterSet* projector) {
  StateTensor s_star = pad_state(normalize_image(x), spec);
  IntegrationOptions quiet = options;
  quiet.noise_sigma = 0.0f;
  Trajectory traj = integrate_reverse(field, s_star.value, make_uniform_grid(options.K), quiet);
  Tensor latent = down_state(traj.states.front(), spec, mode, projector);
  return EncodeResult{std::move(latent), std::move(traj)};
}

}  // namespace rac
