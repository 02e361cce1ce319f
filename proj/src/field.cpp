// SPDX-License-Identifier: Apache-2.0
#include "rac/field.hpp"

namespace rac {

void FieldConfig::validate() const {
  if (C_s < 1) fail("field config: C_s must be positive");
  if (width < C_s)
    fail("field config: width " + std::to_string(width) + " must be >= C_s " + std::to_string(C_s));
  if (depth < 1) fail("field config: depth must be >= 1");
  if (down_factor < 1) fail("field config: down_factor must be >= 1");
}

Tensor assemble_input(const Tensor& s_value, float t, const FieldConfig& cfg) {
  if (t < 0.0f || t > 1.0f) fail("assemble_input: t=" + std::to_string(t) + " outside [0,1]");
  if (s_value.shape.size() != 3 || s_value.shape[0] != cfg.C_s)
    fail("assemble_input: expected " + std::to_string(cfg.C_s) + "xHxW state, got " +
         shape_str(s_value.shape));
  const int H = s_value.shape[1], W = s_value.shape[2];
  std::vector<Tensor> parts;
  parts.push_back(s_value);
  parts.emplace_back(Shape{1, H, W}, t);
  if (cfg.use_pos_enc) {
    Tensor py(Shape{1, H, W});
    Tensor px(Shape{1, H, W});
    for (int y = 0; y < H; ++y) {
      const float vy = H > 1 ? -1.0f + 2.0f * static_cast<float>(y) / static_cast<float>(H - 1)
                             : 0.0f;
      for (int x = 0; x < W; ++x) {
        const float vx = W > 1 ? -1.0f + 2.0f * static_cast<float>(x) / static_cast<float>(W - 1)
                               : 0.0f;
        py.data[y * W + x] = vy;
        px.data[y * W + x] = vx;
      }
    }
    parts.push_back(std::move(py));
    parts.push_back(std::move(px));
  }
  return concat_channels(std::span<const Tensor>(parts.data(), parts.size()));
}

VelocityField::VelocityField(FieldConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937 rng = make_rng(seed, "field-init");
  auto add_conv = [&](const std::string& name, int co, int ci, bool zero) {
    params_.add(name + ".kernel",
                zero ? Tensor(Shape{co, ci, 3, 3}) : he_normal(Shape{co, ci, 3, 3}, rng));
    params_.add(name + ".bias", Tensor(Shape{co}));
  };
  add_conv("field.full0", cfg_.width, cfg_.input_channels(), false);
  for (int i = 1; i < cfg_.depth; ++i)
    add_conv("field.full" + std::to_string(i), cfg_.width, cfg_.width, false);
  for (int i = 0; i < cfg_.depth; ++i)
    add_conv("field.low" + std::to_string(i), cfg_.width, cfg_.width, false);
  add_conv("field.head", cfg_.C_s, cfg_.width, cfg_.zero_init_head);
}

Tensor VelocityField::eval(const Tensor& s_value, float t) const {
  const int H = s_value.shape.size() == 3 ? s_value.shape[1] : 0;
  const int W = s_value.shape.size() == 3 ? s_value.shape[2] : 0;
  if (cfg_.down_factor > 1 && (H % cfg_.down_factor != 0 || W % cfg_.down_factor != 0))
    fail("velocity_eval: down_factor " + std::to_string(cfg_.down_factor) +
         " does not divide state " + shape_str(s_value.shape));
  auto block = [&](const Tensor& x, const std::string& name) {
    return silu(conv2d(x, params_.at(name + ".kernel").value, params_.at(name + ".bias").value));
  };
  Tensor u = assemble_input(s_value, t, cfg_);
  for (int i = 0; i < cfg_.depth; ++i) u = block(u, "field.full" + std::to_string(i));
  Tensor d = avg_pool2d(u, cfg_.down_factor);
  for (int i = 0; i < cfg_.depth; ++i) d = block(d, "field.low" + std::to_string(i));
  Tensor merged = add(u, upsample_nearest(d, cfg_.down_factor));
  return conv2d(merged, params_.at("field.head.kernel").value, params_.at("field.head.bias").value);
}

}  // namespace rac
