// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <set>

#include "rac/data.hpp"
#include "rac/eval.hpp"
#include "rac/state.hpp"
#include "test_util.hpp"

using namespace rac;
using doctest::Approx;
using doctest::Contains;

namespace {

StateSpec eval_spec(int resolution) {
  StateSpec spec;
  spec.C_s = 4;
  spec.C = 4;
  spec.f = 2;
  spec.H = resolution;
  spec.W = resolution;
  return spec;
}

VelocityField zero_field() {
  FieldConfig cfg;
  cfg.C_s = 4;
  cfg.width = 8;
  cfg.depth = 1;
  return VelocityField(cfg, 7);
}

std::vector<Tensor> eval_corpus(int resolution, int count = 4) {
  DatasetSpec spec;
  spec.count = count;
  spec.resolution = resolution;
  spec.seed = 11;
  return gen_synthetic_batch(spec, 0);
}

// RAII guard restoring RAC_THREADS after a test mutates it.
struct ThreadsEnvGuard {
  std::string saved;
  bool had = false;
  ThreadsEnvGuard() {
    if (const char* v = std::getenv("RAC_THREADS")) {
      saved = v;
      had = true;
    }
  }
  ~ThreadsEnvGuard() {
    if (had)
      setenv("RAC_THREADS", saved.c_str(), 1);
    else
      unsetenv("RAC_THREADS");
  }
};

}  // namespace

TEST_CASE("compute_metrics matches the closed-form examples") {
  std::mt19937 rng(3);
  Tensor x = ractest::random_tensor(Shape{3, 4, 4}, rng, 0.0f, 0.9f);

  Metrics same = compute_metrics(x, x);
  CHECK(same.mse == 0.0);
  CHECK(same.psnr == 99.0);

  Tensor shifted = x;
  shifted.data += 0.1f;
  Metrics off = compute_metrics(shifted, x);
  CHECK(off.mse == Approx(0.01).epsilon(1e-5));
  CHECK(off.psnr == Approx(20.0).epsilon(1e-5));

  Metrics swapped = compute_metrics(x, shifted);
  CHECK(swapped.mse == off.mse);
  CHECK(swapped.psnr == off.psnr);

  // monotone: a bigger perturbation scores lower psnr
  Tensor worse = x;
  worse.data += 0.2f;
  Metrics w = compute_metrics(worse, x);
  CHECK(w.mse > off.mse);
  CHECK(w.psnr < off.psnr);

  CHECK_THROWS_WITH(compute_metrics(x, Tensor(Shape{3, 4, 5})), Contains("shape mismatch"));
}

TEST_CASE("psnr caps at 99 for near-identical images") {
  Tensor a(Shape{4});
  Tensor b(Shape{4});
  b.data[0] = 1e-6f;  // mse = 2.5e-13 < 1e-10
  Metrics m = compute_metrics(a, b);
  CHECK(m.mse > 0.0);
  CHECK(m.psnr == 99.0);
}

TEST_CASE("eval threads respect RAC_THREADS and the item count") {
  ThreadsEnvGuard guard;
  setenv("RAC_THREADS", "1", 1);
  CHECK(eval_thread_count(100) == 1);
  setenv("RAC_THREADS", "4", 1);
  CHECK(eval_thread_count(2) <= 2);
  CHECK(eval_thread_count(100) <= 4);
  CHECK(eval_thread_count(1) == 1);
  setenv("RAC_THREADS", "soup", 1);
  CHECK_THROWS_WITH(eval_thread_count(4), Contains("RAC_THREADS"));
  setenv("RAC_THREADS", "0", 1);
  CHECK_THROWS_WITH(eval_thread_count(4), Contains("RAC_THREADS"));
}

TEST_CASE("parallel_for covers every index once and propagates errors") {
  ThreadsEnvGuard guard;
  setenv("RAC_THREADS", "3", 1);
  std::vector<int> hits(64, 0);
  parallel_for(64, [&](int i) { hits[static_cast<std::size_t>(i)] += 1; });
  for (int h : hits) CHECK(h == 1);

  CHECK_THROWS_WITH(parallel_for(16,
                                 [&](int i) {
                                   if (i == 5) fail("worker 5 exploded");
                                 }),
                    Contains("worker 5 exploded"));
}

TEST_CASE("step_sweep is K-invariant for the identity flow") {
  const int R = 8;
  StateSpec spec = eval_spec(R);
  TeacherModel teacher = TeacherModel::analytic(TeacherConfig{});
  VelocityField field = zero_field();
  std::vector<Tensor> images = eval_corpus(R);

  std::vector<SweepRow> rows = step_sweep(field, teacher, spec, images, {1, 2, 4, 8});
  REQUIRE(rows.size() == 4);
  for (const SweepRow& r : rows) {
    CHECK(r.metrics.mse == rows[0].metrics.mse);  // bit-level: states never move
    CHECK(r.metrics.psnr == rows[0].metrics.psnr);
  }

  std::string csv = sweep_csv(rows);
  CHECK(csv.substr(0, 11) == "K,mse,psnr\n");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  std::vector<SweepRow> single = step_sweep(field, teacher, spec, images, {1});
  CHECK(single.size() == 1);
  CHECK(single[0].metrics.mse == rows[0].metrics.mse);
}

TEST_CASE("step_sweep validates its inputs") {
  const int R = 8;
  StateSpec spec = eval_spec(R);
  TeacherModel teacher = TeacherModel::analytic(TeacherConfig{});
  VelocityField field = zero_field();
  CHECK_THROWS_WITH(step_sweep(field, teacher, spec, {}, {1}), Contains("empty image set"));
  CHECK_THROWS_WITH(step_sweep(field, teacher, spec, eval_corpus(R), {}),
                    Contains("empty steps list"));
  CHECK_THROWS_WITH(step_sweep(field, teacher, spec, eval_corpus(R), {1, 0}),
                    Contains("must be >= 1"));
}

TEST_CASE("pca export has the contracted geometry") {
  const int R = 8;
  const int K = 4;
  const int n_pos = 6;
  StateSpec spec = eval_spec(R);
  TeacherModel teacher = TeacherModel::analytic(TeacherConfig{});
  VelocityField field = zero_field();
  std::vector<Tensor> images = eval_corpus(R, 2);

  PcaExport e = pca_trajectories(field, teacher, spec, images, K, n_pos, 3);

  REQUIRE(e.positions.size() == 2 * n_pos);
  for (int i = 0; i < 2; ++i) {
    std::set<int> uniq(e.positions.begin() + i * n_pos, e.positions.begin() + (i + 1) * n_pos);
    CHECK(uniq.size() == n_pos);  // without replacement
    for (int p : uniq) CHECK((p >= 0 && p < R * R));
  }

  REQUIRE(e.rows.size() == 2 * n_pos * (K + 1));
  for (std::size_t r = 0; r < e.rows.size(); ++r) {
    CHECK(e.rows[r].pos_id == static_cast<int>(r) / (K + 1));
    CHECK(e.rows[r].step == static_cast<int>(r) % (K + 1));
    CHECK(e.rows[r].t == static_cast<float>(e.rows[r].step) / K);
  }

  REQUIRE(e.explained.size() == 4);
  double sum = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(e.explained[c] >= 0.0f);
    CHECK(e.explained[c] <= 1.0f);
    if (c) CHECK(e.explained[c] <= e.explained[c - 1]);
    sum += e.explained[c];
  }
  CHECK(sum <= 1.0 + 1e-6);

  // identity flow: a position's whole trajectory projects to one point
  for (std::size_t r = 0; r < e.rows.size(); ++r) {
    const std::size_t base = (r / (K + 1)) * (K + 1);
    CHECK(e.rows[r].pc1 == e.rows[base].pc1);
    CHECK(e.rows[r].pc2 == e.rows[base].pc2);
  }

  std::string csv = pca_csv(e);
  CHECK(csv.substr(0, 22) == "pos_id,step,t,pc1,pc2\n");
  CHECK(std::count(csv.begin(), csv.end(), '\n') ==
        static_cast<std::ptrdiff_t>(1 + e.rows.size()));

  // determinism + seed sensitivity of the sampled sites
  PcaExport e2 = pca_trajectories(field, teacher, spec, images, K, n_pos, 3);
  CHECK(e2.positions == e.positions);
  PcaExport e3 = pca_trajectories(field, teacher, spec, images, K, n_pos, 4);
  CHECK(e3.positions != e.positions);
}

TEST_CASE("pca explained variance matches a brute-force jacobi oracle") {
  const int R = 8;
  const int K = 3;
  StateSpec spec = eval_spec(R);
  TeacherModel teacher = TeacherModel::analytic(TeacherConfig{});
  // non-trivial trajectories: random (non-zero) head
  FieldConfig fcfg;
  fcfg.C_s = 4;
  fcfg.width = 8;
  fcfg.depth = 1;
  fcfg.zero_init_head = false;
  VelocityField field(fcfg, 21);
  std::vector<Tensor> images = eval_corpus(R, 1);

  const int n_pos = R * R;  // all sites, so the data set is easy to rebuild
  PcaExport e = pca_trajectories(field, teacher, spec, images, K, n_pos, 5);

  // rebuild the data matrix from the decode trajectory
  IntegrationOptions options;
  options.K = K;
  Tensor z = teacher.encode(normalize_image(images[0]));
  Trajectory traj = decode(field, spec, z, options).traj;
  const int sites = R * R;
  Eigen::MatrixXd data(static_cast<Eigen::Index>(n_pos) * (K + 1), 4);
  for (int j = 0; j < n_pos; ++j) {
    const int p = e.positions[static_cast<std::size_t>(j)];
    for (int k = 0; k <= K; ++k)
      for (int c = 0; c < 4; ++c)
        data(static_cast<Eigen::Index>(j) * (K + 1) + k, c) =
            static_cast<double>(traj.states[static_cast<std::size_t>(k)].data[c * sites + p]);
  }
  Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(data.rows());
  Eigen::VectorXd evals = ractest::jacobi_eigenvalues(cov);
  const double total = evals.sum();
  REQUIRE(total > 0.0);
  for (int c = 0; c < 4; ++c)
    CHECK(static_cast<double>(e.explained[static_cast<std::size_t>(c)]) ==
          Approx(evals[c] / total).epsilon(1e-6));
}

TEST_CASE("collinear state vectors concentrate all variance in pc1") {
  const int R = 8;
  StateSpec spec = eval_spec(R);
  TeacherModel teacher = TeacherModel::analytic(TeacherConfig{});
  VelocityField field = zero_field();

  // equal RGB ramp: every state vector is (g, g, g, 0.5), an affine line
  Tensor ramp(Shape{3, R, R});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x)
        ramp.data[(c * R + y) * R + x] = static_cast<float>(x) / (R - 1);

  PcaExport e = pca_trajectories(field, teacher, spec, {ramp}, 2, R * R, 0);
  CHECK(e.explained[0] == Approx(1.0).epsilon(1e-6));
  CHECK(e.explained[1] == Approx(0.0).epsilon(1e-6));
}

TEST_CASE("pca rejects oversampling and bad step counts") {
  const int R = 8;
  StateSpec spec = eval_spec(R);
  TeacherModel teacher = TeacherModel::analytic(TeacherConfig{});
  VelocityField field = zero_field();
  std::vector<Tensor> images = eval_corpus(R, 1);
  CHECK_THROWS_WITH(pca_trajectories(field, teacher, spec, images, 4, R * R + 1, 0),
                    Contains("exceeds"));
  CHECK_THROWS_WITH(pca_trajectories(field, teacher, spec, images, 0, 4, 0),
                    Contains("K must be >= 1"));
  CHECK_THROWS_WITH(pca_trajectories(field, teacher, spec, {}, 4, 4, 0),
                    Contains("empty image set"));
  CHECK_NOTHROW(pca_trajectories(field, teacher, spec, images, 4, R * R, 0));
}

TEST_CASE("roundtrip error vanishes for state-independent fields") {
  const int R = 8;
  StateSpec spec = eval_spec(R);
  std::vector<Tensor> images = eval_corpus(R);

  VelocityField zero = zero_field();
  CHECK(roundtrip_eval(zero, spec, images, 4) == 0.0);

  // constant field: zero head kernel, nonzero bias. Reversal is exact in
  // algebra; in 32-bit floats fl(fl(x-a)+a) can differ from x by an ulp, so
  // the residue is bounded by a couple of ulps rather than identically zero.
  VelocityField constant = zero_field();
  constant.params().at("field.head.bias").value.data.setConstant(0.3f);
  CHECK(roundtrip_eval(constant, spec, images, 4) < 1e-7);

  // a state-dependent field does not reverse exactly
  FieldConfig fcfg;
  fcfg.C_s = 4;
  fcfg.width = 8;
  fcfg.depth = 1;
  fcfg.zero_init_head = false;
  VelocityField bent(fcfg, 21);
  CHECK(roundtrip_eval(bent, spec, images, 4) > 0.0);

  CHECK_THROWS_WITH(roundtrip_eval(zero, spec, {}, 4), Contains("empty image set"));
  CHECK_THROWS_WITH(roundtrip_eval(zero, spec, images, 0), Contains("K must be >= 1"));
}
