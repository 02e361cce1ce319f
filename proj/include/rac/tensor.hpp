// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rac/common.hpp"

namespace rac {

// Dense row-major float tensor. `node` links the tensor to the gradient tape
// that recorded it; a tensor whose tape is gone (or that never touched one)
// behaves as a constant.
struct Tensor {
  Shape shape;
  Eigen::ArrayXf data;
  int node = -1;
  std::uint64_t tape_id = 0;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(Eigen::ArrayXf::Zero(numel(shape))) {}
  Tensor(Shape s, float fill)
      : shape(std::move(s)), data(Eigen::ArrayXf::Constant(numel(shape), fill)) {}
  Tensor(Shape s, Eigen::ArrayXf values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape)) fail("tensor data length does not match shape " + shape_str(shape));
  }
  Tensor(Shape s, std::initializer_list<float> values) : Tensor(std::move(s)) {
    if (static_cast<std::int64_t>(values.size()) != size())
      fail("initializer length does not match shape " + shape_str(shape));
    std::int64_t i = 0;
    for (float v : values) data[i++] = v;
  }

  static Tensor scalar(float v) { return Tensor(Shape{1}, Eigen::ArrayXf::Constant(1, v)); }

  std::int64_t size() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }
  float item() const {
    if (!is_scalar()) fail("item() on non-scalar tensor " + shape_str(shape));
    return data[0];
  }

  // Value copy with no tape linkage.
  Tensor detached() const { return Tensor(shape, data); }

  bool all_finite() const { return data.isFinite().all(); }
};

// Reverse-mode tape. Construction makes it the active tape for the current
// thread; ops record themselves onto the active tape when any input is
// tracked. One tape per training iteration, discarded afterwards.
class GradientTape {
 public:
  // Accumulates into input gradient buckets via grad_buffer().
  using BackwardFn = std::function<void(const Eigen::ArrayXf& grad_out, GradientTape& tape)>;

  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  static GradientTape* active();

  std::uint64_t id() const { return id_; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Registers a leaf so gradients can be queried for `t`.
  int watch(Tensor& t);

  // Records an op node. `inputs` are tape node ids of the tracked inputs.
  int record(std::int64_t out_size, std::vector<int> inputs, BackwardFn fn);

  // Reverse pass from a scalar loss recorded on this tape. Each node is
  // visited at most once, in reverse topological (= recording) order.
  void backward(const Tensor& loss);

  // Gradient of the last backward() w.r.t. a watched/recorded tensor.
  // Zeros if the loss did not reach it.
  Eigen::ArrayXf grad(const Tensor& t) const;

  // Accumulation bucket for a node, zero-initialised on first touch.
  Eigen::ArrayXf& grad_buffer(int node);

  // True if `t` is tracked on this tape.
  bool tracks(const Tensor& t) const { return t.node >= 0 && t.tape_id == id_; }

 private:
  struct Node {
    std::int64_t size;
    std::vector<int> inputs;
    BackwardFn back;
  };
  std::vector<Node> nodes_;
  std::vector<Eigen::ArrayXf> grads_;
  std::uint64_t id_;
  GradientTape* prev_ = nullptr;
  bool ran_backward_ = false;
};

// Named leaf with a trainable flag. Frozen parameters are never watched, so
// they enter computations as constants and report zero gradient.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor init, bool trainable = true);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Parameter>& items() { return params_; }
  const std::vector<Parameter>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }

  // Registers every trainable parameter on `tape`.
  void watch_all(GradientTape& tape);

  // Appends `other`'s parameters (names must stay unique).
  void adopt(ParameterSet&& other);

  // Hex SHA-256 over a canonical (name, shape, payload) serialization.
  std::string digest() const;

 private:
  std::vector<Parameter> params_;
};

// Gradient of a scalar loss w.r.t. every parameter in `params`: trainable
// parameters get their accumulated gradient, frozen ones zeros.
std::map<std::string, Tensor> backward(const Tensor& loss, GradientTape& tape,
                                       const ParameterSet& params);

// Hex SHA-256 of a raw byte range.
std::string sha256_hex(const void* data, std::size_t n);

// ---- elementwise ops -------------------------------------------------------

enum class EwOp { Add, Sub, Mul, Scale, Relu, Silu, Exp };

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, float b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, float b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor exp(const Tensor& a);

// Dispatcher over the registered elementwise kinds (gradcheck drives this).
Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b = nullptr, float scalar = 0.0f);

// ---- structured ops --------------------------------------------------------

// Same-padding convolution, odd kernel, stride 1. input C_in x H x W,
// kernel C_out x C_in x k x k, bias C_out; output C_out x H x W.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

// Block mean over f x f cells; f must divide both spatial extents.
Tensor avg_pool2d(const Tensor& input, int f);

// Nearest-neighbour replication of each cell into an f x f block.
Tensor upsample_nearest(const Tensor& input, int f);

Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(std::initializer_list<Tensor> parts);

// Channels [lo, hi) of a C x H x W tensor.
Tensor slice_channels(const Tensor& input, int lo, int hi);

// ---- reductions ------------------------------------------------------------

// Mean over all elements of (a - b)^2. All squared-error losses use this
// mean normalization so loss weights are resolution-independent.
Tensor reduce_mean_sq(const Tensor& a, const Tensor& b);

// Mean over all elements.
Tensor reduce_mean(const Tensor& a);

// ---- initialization / sampling ----------------------------------------------

// Standard-normal draws scaled by `stddev` (integration noise, VAE sampling).
Tensor randn(Shape shape, std::mt19937& rng, float stddev = 1.0f);

// He-normal init for conv kernels: N(0, sqrt(2 / fan_in)), fan_in = product
// of all extents past the first (C_in * k * k).
Tensor he_normal(Shape kernel_shape, std::mt19937& rng);

}  // namespace rac
