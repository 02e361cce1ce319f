// SPDX-License-Identifier: Apache-2.0
#include "rac/gradcheck.hpp"

#include <cmath>
#include <memory>

#include "rac/data.hpp"
#include "rac/state.hpp"

namespace rac {

namespace {

Tensor random_uniform(Shape shape, std::mt19937& rng, float lo, float hi) {
  std::uniform_real_distribution<float> d(lo, hi);
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = d(rng);
  return t;
}

// Values bounded away from zero so kinked ops (relu, silu's near-linear
// regions are fine, clamp edges) never straddle a kink at fd step 1e-3.
Tensor random_offzero(Shape shape, std::mt19937& rng) {
  std::uniform_real_distribution<float> mag(0.1f, 1.0f);
  std::bernoulli_distribution sign(0.5);
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = (sign(rng) ? 1.0f : -1.0f) * mag(rng);
  return t;
}

}  // namespace

double gradcheck_rel_err(const std::function<Tensor(const std::vector<Tensor>&)>& op,
                         std::vector<Tensor> inputs, std::uint64_t probe_seed, float eps) {
  Tensor y0 = op(inputs);
  std::mt19937 rng = make_rng(probe_seed, "gradcheck-probe");
  std::uniform_real_distribution<float> wd(-1.0f, 1.0f);
  Tensor weights(y0.shape);
  for (std::int64_t i = 0; i < weights.size(); ++i) weights.data[i] = wd(rng);

  auto probe = [&](const Tensor& y) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < y.size(); ++i)
      acc += static_cast<double>(weights.data[i]) * static_cast<double>(y.data[i]);
    return acc / static_cast<double>(y.size());
  };

  std::vector<Eigen::ArrayXf> ad;
  {
    GradientTape tape;
    for (Tensor& t : inputs) tape.watch(t);
    Tensor loss = reduce_mean(mul(op(inputs), weights));
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

std::vector<GradCheckCase> gradcheck_ops(std::uint64_t seed) {
  std::vector<GradCheckCase> cases;
  auto run = [&](const std::string& name,
                 const std::function<Tensor(const std::vector<Tensor>&)>& op,
                 std::vector<Tensor> inputs) {
    GradCheckCase c;
    c.name = name;
    c.rel_err = gradcheck_rel_err(op, std::move(inputs), derive_seed(seed, name));
    c.pass = c.rel_err < c.tolerance;
    cases.push_back(c);
  };
  auto rng_for = [&](const std::string& name) { return make_rng(seed, "gradcheck-" + name); };

  {
    std::mt19937 r = rng_for("add");
    run("add", [](const std::vector<Tensor>& in) { return add(in[0], in[1]); },
        {random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f),
         random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("add_scalar");
    run("add_scalar", [](const std::vector<Tensor>& in) { return add(in[0], 0.7f); },
        {random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("sub");
    run("sub", [](const std::vector<Tensor>& in) { return sub(in[0], in[1]); },
        {random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f),
         random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("sub_scalar");
    run("sub_scalar", [](const std::vector<Tensor>& in) { return sub(in[0], -0.4f); },
        {random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("mul");
    run("mul", [](const std::vector<Tensor>& in) { return mul(in[0], in[1]); },
        {random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f),
         random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("scale");
    run("scale", [](const std::vector<Tensor>& in) { return scale(in[0], -1.3f); },
        {random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("relu");
    run("relu", [](const std::vector<Tensor>& in) { return relu(in[0]); },
        {random_offzero(Shape{3, 4, 4}, r)});
  }
  {
    std::mt19937 r = rng_for("silu");
    run("silu", [](const std::vector<Tensor>& in) { return silu(in[0]); },
        {random_uniform(Shape{3, 4, 4}, r, -2.0f, 2.0f)});
  }
  {
    std::mt19937 r = rng_for("exp");
    run("exp", [](const std::vector<Tensor>& in) { return exp(in[0]); },
        {random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("conv2d");
    run("conv2d", [](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2]); },
        {random_uniform(Shape{3, 6, 6}, r, -1.0f, 1.0f),
         random_uniform(Shape{5, 3, 3, 3}, r, -0.5f, 0.5f),
         random_uniform(Shape{5}, r, -0.5f, 0.5f)});
  }
  {
    std::mt19937 r = rng_for("avg_pool2d");
    run("avg_pool2d", [](const std::vector<Tensor>& in) { return avg_pool2d(in[0], 2); },
        {random_uniform(Shape{3, 8, 8}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("upsample_nearest");
    run("upsample_nearest",
        [](const std::vector<Tensor>& in) { return upsample_nearest(in[0], 2); },
        {random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("concat_channels");
    run("concat_channels",
        [](const std::vector<Tensor>& in) { return concat_channels({in[0], in[1]}); },
        {random_uniform(Shape{2, 4, 4}, r, -1.0f, 1.0f),
         random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("slice_channels");
    run("slice_channels",
        [](const std::vector<Tensor>& in) { return slice_channels(in[0], 1, 4); },
        {random_uniform(Shape{5, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("reduce_mean");
    run("reduce_mean", [](const std::vector<Tensor>& in) { return reduce_mean(in[0]); },
        {random_uniform(Shape{4, 5, 5}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("reduce_mean_sq");
    run("reduce_mean_sq",
        [](const std::vector<Tensor>& in) { return reduce_mean_sq(in[0], in[1]); },
        {random_uniform(Shape{4, 5, 5}, r, -1.0f, 1.0f),
         random_uniform(Shape{4, 5, 5}, r, -1.0f, 1.0f)});
  }

  StateSpec spec;
  spec.C_s = 5;
  spec.C = 3;
  spec.f = 2;
  spec.H = 4;
  spec.W = 4;
  {
    std::mt19937 r = rng_for("pad_state");
    run("pad_state",
        [spec](const std::vector<Tensor>& in) { return pad_state(in[0], spec).value; },
        {random_uniform(Shape{3, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("expand_latent");
    run("expand_latent",
        [spec](const std::vector<Tensor>& in) { return expand_latent(in[0], spec).value; },
        {random_uniform(Shape{3, 2, 2}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("down_state_avg");
    run("down_state_avg",
        [spec](const std::vector<Tensor>& in) { return down_state(in[0], spec); },
        {random_uniform(Shape{5, 4, 4}, r, -1.0f, 1.0f)});
  }
  {
    std::mt19937 r = rng_for("down_state_learned");
    run("down_state_learned",
        [spec](const std::vector<Tensor>& in) {
          ParameterSet proj;
          proj.add("projector.kernel", in[1]);
          proj.add("projector.bias", in[2]);
          return down_state(in[0], spec, DownMode::Learned, &proj);
        },
        {random_uniform(Shape{5, 4, 4}, r, -1.0f, 1.0f),
         random_uniform(Shape{3, 5, 1, 1}, r, -0.5f, 0.5f),
         random_uniform(Shape{3}, r, -0.5f, 0.5f)});
  }
  {
    // keep every value > eps away from the clamp kinks at 0 and 1
    std::mt19937 r = rng_for("clamp01");
    Tensor t(Shape{4, 4});
    std::uniform_real_distribution<float> d(-0.5f, 1.5f);
    for (std::int64_t i = 0; i < t.size(); ++i) {
      float v = d(r);
      while (std::abs(v) < 0.05f || std::abs(v - 1.0f) < 0.05f) v = d(r);
      t.data[i] = v;
    }
    run("clamp01", [](const std::vector<Tensor>& in) { return clamp01(in[0]); }, {t});
  }
  {
    std::mt19937 r = rng_for("project_rgb");
    run("project_rgb",
        [](const std::vector<Tensor>& in) { return project_rgb(in[0]); },
        {random_uniform(Shape{5, 4, 4}, r, -0.85f, 0.85f)});
  }
  {
    // the whole network: gradients w.r.t. the state and every parameter
    FieldConfig fcfg;
    fcfg.C_s = 4;
    fcfg.width = 4;
    fcfg.depth = 1;
    fcfg.zero_init_head = false;
    auto field = std::make_shared<VelocityField>(fcfg, derive_seed(seed, "gradcheck-field"));
    std::mt19937 r = rng_for("field_eval");
    std::vector<Tensor> inputs = {random_uniform(Shape{4, 4, 4}, r, -1.0f, 1.0f)};
    for (const Parameter& p : field->params().items()) inputs.push_back(p.value);
    run("field_eval",
        [field](const std::vector<Tensor>& in) {
          std::vector<Parameter>& params = field->params().items();
          for (std::size_t i = 0; i < params.size(); ++i) params[i].value = in[i + 1];
          return field->eval(in[0], 0.375f);
        },
        std::move(inputs));
  }
  return cases;
}

GradCheckCase gradcheck_iteration_loss(std::uint64_t seed, int coord_samples) {
  StateSpec spec;
  spec.C_s = 4;
  spec.C = 4;
  spec.f = 2;
  spec.H = 8;
  spec.W = 8;
  TeacherModel teacher = TeacherModel::analytic(TeacherConfig{});
  VelocityField field(FieldConfig{}, derive_seed(seed, "gradcheck-loss-field"));
  TrainConfig cfg;  // default hyperparameters; geometry scaled to 8x8, K = 2
  cfg.resolution = 8;
  cfg.K = 2;
  cfg.seed = seed;
  Trainer trainer(cfg, spec, teacher, field);

  DatasetSpec dspec;
  dspec.count = cfg.batch_size;
  dspec.resolution = 8;
  dspec.seed = derive_seed(seed, "gradcheck-loss-data");
  const std::vector<Tensor> batch = gen_synthetic_batch(dspec, 0);

  std::map<std::string, Tensor> grads;
  {
    GradientTape tape;
    field.params().watch_all(tape);
    Tensor total = trainer.batch_loss(batch, 0);
    grads = backward(total, tape, field.params());
  }

  // proportional seeded subsample of parameter coordinates
  std::mt19937 rng = make_rng(seed, "gradcheck-loss-coords");
  std::int64_t total_coords = 0;
  for (const Parameter& p : field.params().items()) total_coords += p.value.size();

  const float eps = 1e-3f;
  double max_abs_err = 0.0, max_fd = 0.0;
  for (Parameter& p : field.params().items()) {
    const std::int64_t n = p.value.size();
    std::int64_t want = (static_cast<std::int64_t>(coord_samples) * n) / total_coords;
    want = std::max<std::int64_t>(1, std::min(want, n));
    const Eigen::ArrayXf& g = grads.at(p.name).data;
    for (std::int64_t s = 0; s < want; ++s) {
      const std::int64_t i =
          std::uniform_int_distribution<std::int64_t>(0, n - 1)(rng);
      const float orig = p.value.data[i];
      p.value.data[i] = orig + eps;
      const double fp = static_cast<double>(trainer.batch_loss(batch, 0).item());
      p.value.data[i] = orig - eps;
      const double fm = static_cast<double>(trainer.batch_loss(batch, 0).item());
      p.value.data[i] = orig;
      const double fd = (fp - fm) / (2.0 * static_cast<double>(eps));
      max_abs_err = std::max(max_abs_err, std::abs(static_cast<double>(g[i]) - fd));
      max_fd = std::max(max_fd, std::abs(fd));
    }
  }

  GradCheckCase c;
  c.name = "iteration_loss";
  c.rel_err = max_abs_err / std::max(max_fd, 1e-12);
  c.pass = c.rel_err < c.tolerance;
  return c;
}

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckCase> cases = gradcheck_ops(seed);
  cases.push_back(gradcheck_iteration_loss(seed));
  return cases;
}

}  // namespace rac
