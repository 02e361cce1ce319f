// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "rac/field.hpp"
#include "rac/state.hpp"
#include "rac/tensor.hpp"

namespace rac {

// Discrete time nodes 0 = t_0 < t_1 < ... < t_K = 1.
struct TimeGrid {
  std::vector<float> nodes;

  int K() const { return static_cast<int>(nodes.size()) - 1; }
  float dt(int k) const { return nodes[static_cast<std::size_t>(k) + 1] - nodes[k]; }
  void validate() const;
};

TimeGrid make_uniform_grid(int K);

// K-1 interior points drawn uniform(0,1), sorted; redrawn on the
// (measure-zero) chance of a collision with each other or the endpoints.
TimeGrid sample_random_grid(int K, std::mt19937& rng);

enum class Direction { Forward, Reverse };

// All K+1 states of one integration, time-indexed: states[k] belongs to
// node t_k regardless of direction.
struct Trajectory {
  TimeGrid grid;
  std::vector<Tensor> states;
  Direction direction = Direction::Forward;
};

struct IntegrationOptions {
  int K = 4;
  float noise_sigma = 0.05f;  // per-step Gaussian noise, training only
  bool random_grid = true;    // training only
  std::uint64_t rng_seed = 0; // fallback noise seed when no rng is passed
};

// Any velocity field (s, t) -> velocity; lets closed-form test fields use
// the same integrator as the learned network.
using VelocityFn = std::function<Tensor(const Tensor&, float)>;

// Forward Euler: s_{k+1} = s_k + dt_k * v(s_k, t_k) [+ sigma * eps]. Noise
// draws come from `rng` when given, else from a generator seeded with
// options.rng_seed. Non-finite states abort with the step index.
Trajectory integrate_forward(const VelocityFn& v, const Tensor& s0, const TimeGrid& grid,
                             const IntegrationOptions& options, std::mt19937* rng = nullptr);

// Time reversal, descending k: s_k = s_{k+1} - dt_k * v(s_{k+1}, t_{k+1}).
// The right-endpoint evaluation makes reverse-of-forward exact for
// state-independent fields.
Trajectory integrate_reverse(const VelocityFn& v, const Tensor& sK, const TimeGrid& grid,
                             const IntegrationOptions& options, std::mt19937* rng = nullptr);

Trajectory integrate_forward(const VelocityField& field, const Tensor& s0, const TimeGrid& grid,
                             const IntegrationOptions& options, std::mt19937* rng = nullptr);
Trajectory integrate_reverse(const VelocityField& field, const Tensor& sK, const TimeGrid& grid,
                             const IntegrationOptions& options, std::mt19937* rng = nullptr);

struct DecodeResult {
  Tensor image;  // 3 x H x W in [0,1]
  Trajectory traj;
};

struct EncodeResult {
  Tensor latent;  // C x h x w
  Trajectory traj;
};

// Inference decode: s_0 = expand_latent(z_T), K uniform noise-free Euler
// steps, then project_rgb(s_K). Deterministic by contract, so
// options.noise_sigma and options.random_grid are ignored here.
DecodeResult decode(const VelocityField& field, const StateSpec& spec, const Tensor& z_T,
                    const IntegrationOptions& options);

// Inference encode: s* = pad_state(normalize_image(x)), reverse integration,
// then down_state(s_0). Deterministic like decode.
EncodeResult encode(const VelocityField& field, const StateSpec& spec, const Tensor& x,
                    const IntegrationOptions& options, DownMode mode = DownMode::AvgPool,
                    const ParameterSet* projector = nullptr);

}  // namespace rac
