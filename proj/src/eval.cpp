// SPDX-License-Identifier: Apache-2.0
#include "rac/eval.hpp"

#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <numeric>
#include <thread>

#include "rac/state.hpp"

namespace rac {

namespace {

std::string format_row(const char* fmt, ...) {
  char buf[160];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

double sq_norm(const Tensor& a) { return a.data.cast<double>().square().sum(); }

double sq_dist(const Tensor& a, const Tensor& b) {
  return (a.data - b.data).cast<double>().square().sum();
}

}  // namespace

Metrics compute_metrics(const Tensor& a, const Tensor& b) {
  if (!same_shape(a.shape, b.shape))
    fail("compute_metrics: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  if (a.size() == 0) fail("compute_metrics: empty input");
  Metrics m;
  m.mse = sq_dist(a, b) / static_cast<double>(a.size());
  m.psnr = m.mse <= 0.0 ? 99.0 : std::min(99.0, 10.0 * std::log10(1.0 / m.mse));
  return m;
}

int eval_thread_count(int n_items) {
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  if (const char* env = std::getenv("RAC_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1)
      fail("RAC_THREADS must be a positive integer, got '" + std::string(env) + "'");
    threads = std::min<long>(threads, cap);
  }
  return std::max(1, std::min(threads, n_items));
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int threads = eval_thread_count(n);
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(n);  // stop handing out work
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<SweepRow> step_sweep(const VelocityField& field, const TeacherModel& teacher,
                                 const StateSpec& spec, const std::vector<Tensor>& images,
                                 const std::vector<int>& steps) {
  if (images.empty()) fail("step_sweep: empty image set");
  if (steps.empty()) fail("step_sweep: empty steps list");
  for (int K : steps)
    if (K < 1) fail("step_sweep: step counts must be >= 1");

  const int n = static_cast<int>(images.size());
  std::vector<Tensor> latents(static_cast<std::size_t>(n));
  parallel_for(n, [&](int i) {
    latents[static_cast<std::size_t>(i)] = teacher.encode(normalize_image(images[i]));
  });

  std::vector<SweepRow> rows;
  rows.reserve(steps.size());
  for (int K : steps) {
    IntegrationOptions options;
    options.K = K;
    std::vector<double> mse(static_cast<std::size_t>(n));
    parallel_for(n, [&](int i) {
      const DecodeResult dr = decode(field, spec, latents[static_cast<std::size_t>(i)], options);
      mse[static_cast<std::size_t>(i)] =
          sq_dist(dr.image, images[i]) / static_cast<double>(dr.image.size());
    });
    SweepRow row;
    row.K = K;
    row.metrics.mse = std::accumulate(mse.begin(), mse.end(), 0.0) / n;
    row.metrics.psnr = row.metrics.mse <= 0.0
                           ? 99.0
                           : std::min(99.0, 10.0 * std::log10(1.0 / row.metrics.mse));
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "K,mse,psnr\n";
  for (const SweepRow& r : rows)
    out += format_row("%d,%.8g,%.8g\n", r.K, r.metrics.mse, r.metrics.psnr);
  return out;
}

PcaExport pca_trajectories(const VelocityField& field, const TeacherModel& teacher,
                           const StateSpec& spec, const std::vector<Tensor>& images, int K,
                           int n_positions, std::uint64_t seed) {
  if (images.empty()) fail("pca_trajectories: empty image set");
  if (K < 1) fail("pca_trajectories: K must be >= 1");
  const int sites = spec.H * spec.W;
  if (n_positions < 1) fail("pca_trajectories: n_positions must be >= 1");
  if (n_positions > sites)
    fail("pca_trajectories: n_positions " + std::to_string(n_positions) + " exceeds " +
         std::to_string(spec.H) + "x" + std::to_string(spec.W));

  const int n_images = static_cast<int>(images.size());
  std::vector<Trajectory> trajs(static_cast<std::size_t>(n_images));
  parallel_for(n_images, [&](int i) {
    IntegrationOptions options;
    options.K = K;
    const Tensor z = teacher.encode(normalize_image(images[i]));
    trajs[static_cast<std::size_t>(i)] = decode(field, spec, z, options).traj;
  });

  PcaExport e;
  // one data row per (image, sampled position, trajectory step)
  const int per_image = n_positions * (K + 1);
  Eigen::MatrixXd data(static_cast<Eigen::Index>(n_images) * per_image, spec.C_s);
  std::vector<float> times;
  times.reserve(static_cast<std::size_t>(n_images) * per_image);
  for (int i = 0; i < n_images; ++i) {
    // partial Fisher-Yates: n_positions distinct sites per image
    std::mt19937 rng = make_rng(seed, "pca-positions-" + std::to_string(i));
    std::vector<int> perm(static_cast<std::size_t>(sites));
    std::iota(perm.begin(), perm.end(), 0);
    for (int j = 0; j < n_positions; ++j) {
      std::uniform_int_distribution<int> pick(j, sites - 1);
      std::swap(perm[static_cast<std::size_t>(j)], perm[static_cast<std::size_t>(pick(rng))]);
      e.positions.push_back(perm[static_cast<std::size_t>(j)]);
    }
    const Trajectory& traj = trajs[static_cast<std::size_t>(i)];
    for (int j = 0; j < n_positions; ++j) {
      const int p = e.positions[static_cast<std::size_t>(i * n_positions + j)];
      for (int k = 0; k <= K; ++k) {
        const Eigen::Index row = static_cast<Eigen::Index>(i) * per_image + j * (K + 1) + k;
        const Tensor& s = traj.states[static_cast<std::size_t>(k)];
        for (int c = 0; c < spec.C_s; ++c)
          data(row, c) = static_cast<double>(s.data[c * sites + p]);
        times.push_back(traj.grid.nodes[static_cast<std::size_t>(k)]);
      }
    }
  }

  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(data.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) fail("pca_trajectories: eigen decomposition failed");

  // Eigen sorts eigenvalues ascending; flip to descending and normalize
  Eigen::VectorXd evals = solver.eigenvalues().reverse();
  Eigen::MatrixXd evecs = solver.eigenvectors().rowwise().reverse();
  evals = evals.cwiseMax(0.0);
  const double total = evals.sum();
  e.explained.resize(static_cast<std::size_t>(spec.C_s), 0.0f);
  if (total > 0.0)
    for (int c = 0; c < spec.C_s; ++c)
      e.explained[static_cast<std::size_t>(c)] = static_cast<float>(evals[c] / total);

  // fix each direction's sign: largest-magnitude component points positive
  e.directions.resize(spec.C_s, 2);
  for (int d = 0; d < 2; ++d) {
    Eigen::VectorXd dir = evecs.col(d);
    Eigen::Index arg = 0;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir[arg] < 0.0) dir = -dir;
    e.directions.col(d) = dir.cast<float>();
  }

  const Eigen::MatrixXd projected = centered * e.directions.cast<double>();
  e.rows.resize(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    PcaExport::Row& row = e.rows[static_cast<std::size_t>(r)];
    row.pos_id = static_cast<int>(r / (K + 1));
    row.step = static_cast<int>(r % (K + 1));
    row.t = times[static_cast<std::size_t>(r)];
    row.pc1 = static_cast<float>(projected(r, 0));
    row.pc2 = static_cast<float>(projected(r, 1));
  }
  return e;
}

std::string pca_csv(const PcaExport& e) {
  std::string out = "pos_id,step,t,pc1,pc2\n";
  for (const PcaExport::Row& r : e.rows)
    out += format_row("%d,%d,%.8g,%.8g,%.8g\n", r.pos_id, r.step, r.t, r.pc1, r.pc2);
  return out;
}

double roundtrip_eval(const VelocityField& field, const StateSpec& spec,
                      const std::vector<Tensor>& images, int K) {
  if (images.empty()) fail("roundtrip_eval: empty image set");
  if (K < 1) fail("roundtrip_eval: K must be >= 1");
  const TimeGrid grid = make_uniform_grid(K);
  IntegrationOptions quiet;
  quiet.K = K;
  quiet.noise_sigma = 0.0f;
  quiet.random_grid = false;

  const int n = static_cast<int>(images.size());
  std::vector<double> rel(static_cast<std::size_t>(n));
  parallel_for(n, [&](int i) {
    const Tensor s_star = pad_state(normalize_image(images[i]), spec).value;
    const double ref = std::sqrt(sq_norm(s_star));
    if (ref == 0.0) fail("roundtrip_eval: zero-norm reference state");
    const Trajectory rev = integrate_reverse(field, s_star, grid, quiet);
    const Trajectory fwd = integrate_forward(field, rev.states.front(), grid, quiet);
    rel[static_cast<std::size_t>(i)] = std::sqrt(sq_dist(fwd.states.back(), s_star)) / ref;
  });
  return std::accumulate(rel.begin(), rel.end(), 0.0) / n;
}

}  // namespace rac
