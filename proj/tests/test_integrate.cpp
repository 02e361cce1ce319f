// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "rac/integrate.hpp"
#include "rac/teacher.hpp"
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
  opt.random_grid = false;
  return opt;
}

// s_0 and c on a dyadic lattice so every Euler update is exact in 32-bit;
// used for the bit-level reverse-of-forward checks.
Tensor dyadic_tensor(const Shape& shape, std::mt19937& rng) {
  std::uniform_int_distribution<int> d(-1024, 1024);
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.data[i] = static_cast<float>(d(rng)) / 1024.0f;
  return t;
}

}  // namespace

TEST_CASE("uniform grid nodes are k/K") {
  TimeGrid g4 = make_uniform_grid(4);
  CHECK(g4.nodes == std::vector<float>{0.0f, 0.25f, 0.5f, 0.75f, 1.0f});
  for (int k = 0; k < 4; ++k) CHECK(g4.dt(k) == 0.25f);

  TimeGrid g1 = make_uniform_grid(1);
  CHECK(g1.nodes == std::vector<float>{0.0f, 1.0f});

  CHECK_THROWS(make_uniform_grid(0));
  CHECK_NOTHROW(g4.validate());
}

TEST_CASE("random grids are strictly increasing with unit span") {
  std::mt19937 rng(109);
  for (int rep = 0; rep < 10000; ++rep) {
    TimeGrid g = sample_random_grid(4, rng);
    REQUIRE(g.nodes.size() == 5);
    REQUIRE(g.nodes.front() == 0.0f);
    REQUIRE(g.nodes.back() == 1.0f);
    float span = 0.0f;
    for (int k = 0; k < g.K(); ++k) {
      REQUIRE(g.dt(k) > 0.0f);
      span += g.dt(k);
    }
    REQUIRE(std::abs(span - 1.0f) < 1e-6f);
  }

  // K=1 has no interior points regardless of rng
  TimeGrid g1 = sample_random_grid(1, rng);
  CHECK(g1.nodes == std::vector<float>{0.0f, 1.0f});

  // fixed seed reproduces the grid
  std::mt19937 a(7), b(7);
  CHECK(sample_random_grid(6, a).nodes == sample_random_grid(6, b).nodes);
}

TEST_CASE("zero field is the identity flow") {
  std::mt19937 rng(113);
  Tensor s0 = random_tensor({4, 4, 4}, rng);
  Trajectory traj = integrate_forward(kZeroField, s0, make_uniform_grid(4), quiet(4));
  CHECK(traj.states.size() == 5);
  for (const Tensor& s : traj.states) CHECK((s.data == s0.data).all());

  Trajectory back = integrate_reverse(kZeroField, s0, make_uniform_grid(4), quiet(4));
  CHECK((back.states.front().data == s0.data).all());
}

TEST_CASE("constant field displaces by exactly c over any grid") {
  std::mt19937 rng(127);
  Tensor s0 = random_tensor({2, 2, 2}, rng);
  Tensor c = random_tensor({2, 2, 2}, rng);
  const VelocityFn const_field = [&](const Tensor&, float) { return c; };

  for (int rep = 0; rep < 20; ++rep) {
    TimeGrid grid = sample_random_grid(5, rng);
    Trajectory traj = integrate_forward(const_field, s0, grid, quiet(5));
    CHECK((traj.states.back().data - (s0.data + c.data)).abs().maxCoeff() < 1e-6f);

    // reverse-of-forward cancels the state-independent field
    Trajectory back = integrate_reverse(const_field, traj.states.back(), grid, quiet(5));
    CHECK((back.states.front().data - s0.data).abs().maxCoeff() < 1e-6f);
  }
}

TEST_CASE("constant-field round trip is bit-exact on dyadic inputs and uniform grids") {
  std::mt19937 rng(131);
  Tensor s0 = dyadic_tensor({3, 2, 2}, rng);
  Tensor c = dyadic_tensor({3, 2, 2}, rng);
  const VelocityFn const_field = [&](const Tensor&, float) { return c; };
  TimeGrid grid = make_uniform_grid(4);
  Trajectory fwd = integrate_forward(const_field, s0, grid, quiet(4));
  Trajectory back = integrate_reverse(const_field, fwd.states.back(), grid, quiet(4));
  CHECK((back.states.front().data == s0.data).all());
}

TEST_CASE("linear field matches the closed-form compound products") {
  Tensor one = Tensor::scalar(1.0f);
  TimeGrid grid = make_uniform_grid(4);

  Trajectory fwd = integrate_forward(kLinearField, one, grid, quiet(4));
  CHECK(fwd.states.back().item() == 2.44140625f);  // (1 + 1/4)^4, exact in f32

  Trajectory back = integrate_reverse(kLinearField, fwd.states.back(), grid, quiet(4));
  CHECK(back.states.front().item() == 0.7724761962890625f);  // (1-1/16)^4, exact
}

TEST_CASE("linear-field round trip converges monotonically to 1 in K") {
  float prev = -1.0f;
  for (int K : {1, 2, 4, 8, 16, 32}) {
    TimeGrid grid = make_uniform_grid(K);
    Trajectory fwd = integrate_forward(kLinearField, Tensor::scalar(1.0f), grid, quiet(K));
    Trajectory back = integrate_reverse(kLinearField, fwd.states.back(), grid, quiet(K));
    const float rt = back.states.front().item();
    // closed form (1 - 1/K^2)^K
    const float expect =
        static_cast<float>(std::pow(1.0 - 1.0 / (static_cast<double>(K) * K), K));
    CHECK(rt == doctest::Approx(expect).epsilon(1e-5));
    CHECK(rt > prev);
    CHECK(rt < 1.0f);
    prev = rt;
  }
  CHECK(prev > 0.96f);  // K=32 is within ~3% of the continuous limit
}

TEST_CASE("step noise is reproducible by seed and off at zero sigma") {
  std::mt19937 rng(137);
  Tensor s0 = random_tensor({4, 4, 4}, rng);
  IntegrationOptions noisy = quiet(4);
  noisy.noise_sigma = 0.05f;

  std::mt19937 na(21), nb(21), nc(22);
  Trajectory a = integrate_forward(kZeroField, s0, make_uniform_grid(4), noisy, &na);
  Trajectory b = integrate_forward(kZeroField, s0, make_uniform_grid(4), noisy, &nb);
  Trajectory c = integrate_forward(kZeroField, s0, make_uniform_grid(4), noisy, &nc);
  CHECK((a.states.back().data == b.states.back().data).all());
  CHECK((a.states.back().data != c.states.back().data).any());
  // noise actually moved the state
  CHECK((a.states.back().data != s0.data).any());
}

TEST_CASE("non-finite states abort with an error") {
  const VelocityFn nan_field = [](const Tensor& s, float) {
    Tensor v(s.shape);
    v.data[0] = std::numeric_limits<float>::quiet_NaN();
    return v;
  };
  Tensor s0(Shape{1, 2, 2}, 1.0f);
  CHECK_THROWS(integrate_forward(nan_field, s0, make_uniform_grid(2), quiet(2)));
  CHECK_THROWS(integrate_reverse(nan_field, s0, make_uniform_grid(2), quiet(2)));
}

TEST_CASE("decode with a zero field projects the expanded latent unchanged") {
  StateSpec spec;
  spec.C_s = 4;
  spec.C = 4;
  spec.H = 8;
  spec.W = 8;
  spec.f = 2;
  FieldConfig fc;
  fc.C_s = 4;
  fc.width = 8;
  VelocityField field(fc, 1);  // zero-init head

  std::mt19937 rng(139);
  Tensor z = random_tensor({4, 4, 4}, rng);
  for (int K : {1, 2, 4, 8}) {
    DecodeResult out = decode(field, spec, z, quiet(K));
    Tensor direct = project_rgb(expand_latent(z, spec));
    CHECK(out.image.shape == Shape{3, 8, 8});
    CHECK((out.image.data == direct.data).all());
    CHECK(out.traj.states.size() == static_cast<std::size_t>(K) + 1);
  }
}

TEST_CASE("encode with a zero field equals the analytic teacher encode") {
  StateSpec spec;
  spec.C_s = 4;
  spec.C = 4;
  spec.H = 8;
  spec.W = 8;
  spec.f = 2;
  FieldConfig fc;
  fc.C_s = 4;
  fc.width = 8;
  VelocityField field(fc, 1);

  TeacherConfig tc;
  tc.C = 4;
  tc.f = 2;
  TeacherModel teacher = TeacherModel::analytic(tc);

  std::mt19937 rng(149);
  Tensor x = random_tensor({3, 8, 8}, rng, 0.0f, 1.0f);
  EncodeResult enc = encode(field, spec, x, quiet(4));
  CHECK(enc.latent.shape == Shape{4, 4, 4});
  Tensor z_teacher = teacher.encode(normalize_image(x));
  CHECK((enc.latent.data == z_teacher.data).all());
}
