// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rac/integrate.hpp"
#include "rac/teacher.hpp"

namespace rac {

// Reconstruction quality in [0,1] pixel units.
struct Metrics {
  double mse = 0.0;
  double psnr = 0.0;  // 10*log10(1/mse), capped at 99 below mse 1e-10
};

// Mean squared error + PSNR between equal-shaped images. Symmetric.
Metrics compute_metrics(const Tensor& a, const Tensor& b);

// Worker count for per-image evaluation loops: hardware concurrency capped
// by the RAC_THREADS environment variable (and by the item count). Results
// are accumulated in item order, so the thread count never changes output.
int eval_thread_count(int n_items);

// Runs fn(i) for i in [0, n) on eval_thread_count(n) workers.
void parallel_for(int n, const std::function<void(int)>& fn);

struct SweepRow {
  int K = 0;
  Metrics metrics;  // mean mse over the corpus; psnr computed from that mean
};

// Decodes every image's teacher latent at each step count (uniform grid,
// no noise) and reports the corpus-mean reconstruction quality.
std::vector<SweepRow> step_sweep(const VelocityField& field, const TeacherModel& teacher,
                                 const StateSpec& spec, const std::vector<Tensor>& images,
                                 const std::vector<int>& steps);

// CSV with header `K,mse,psnr`, one row per step count.
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Decoding trajectories of sampled spatial positions projected into the
// plane of their top-2 principal components.
struct PcaExport {
  struct Row {
    int pos_id = 0;  // running id over (image, sampled position)
    int step = 0;    // 0..K along the decode trajectory
    float t = 0.0f;
    float pc1 = 0.0f, pc2 = 0.0f;
  };
  std::vector<int> positions;        // flattened y*W + x, n per image
  Eigen::MatrixXf directions;        // C_s x 2, deterministic sign
  std::vector<float> explained;      // variance ratios, all C_s, descending
  std::vector<Row> rows;             // (K+1) consecutive rows per position
};

// Decodes each image once (uniform grid, no noise), samples n_positions
// spatial sites per image without replacement, and fits one PCA over the
// union of all sampled C_s-vectors across the K+1 trajectory states.
PcaExport pca_trajectories(const VelocityField& field, const TeacherModel& teacher,
                           const StateSpec& spec, const std::vector<Tensor>& images, int K,
                           int n_positions, std::uint64_t seed);

// CSV with header `pos_id,step,t,pc1,pc2`.
std::string pca_csv(const PcaExport& e);

// Mean over images of ||Flow(Flow^-1(s*)) - s*|| / ||s*|| on noise-free
// uniform grids; 0 exactly for any state-independent field.
double roundtrip_eval(const VelocityField& field, const StateSpec& spec,
                      const std::vector<Tensor>& images, int K);

}  // namespace rac
