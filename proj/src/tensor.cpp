// SPDX-License-Identifier: Apache-2.0
#include "rac/tensor.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cstring>
#include <utility>

namespace rac {

namespace {

thread_local GradientTape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_tape_counter{1};

int node_of(const Tensor& t) {
  GradientTape* tape = GradientTape::active();
  return (tape && tape->tracks(t)) ? t.node : -1;
}

// Attaches `out` to the active tape when at least one input is tracked.
void finish(Tensor& out, std::vector<int> inputs, GradientTape::BackwardFn fn) {
  GradientTape* tape = GradientTape::active();
  if (!tape) return;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](int id) { return id >= 0; });
  if (!any) return;
  out.node = tape->record(out.size(), std::move(inputs), std::move(fn));
  out.tape_id = tape->id();
}

#ifndef NDEBUG
void debug_check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) fail(std::string(op) + ": non-finite values in result");
}
#define RAC_FINITE(t, op) debug_check_finite(t, op)
#else
#define RAC_FINITE(t, op) ((void)0)
#endif

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a.shape, b.shape))
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

Eigen::ArrayXf sigmoid(const Eigen::ArrayXf& x) { return 1.0f / (1.0f + (-x).exp()); }

struct Chw {
  int c, h, w;
};

Chw chw(const Tensor& t, const char* op) {
  if (t.shape.size() != 3) fail(std::string(op) + ": expected CxHxW tensor, got " + shape_str(t.shape));
  return {t.shape[0], t.shape[1], t.shape[2]};
}

// Same-padding direct convolution on raw buffers; shared by the forward pass
// and the input-gradient pass (which convolves with the flipped kernel).
void conv2d_raw(const float* in, int ci_n, int h, int w, const float* kernel, int k,
                const float* bias, int co_n, float* out) {
  const int p = k / 2;
  std::vector<float> accbuf(static_cast<std::size_t>(w));
  float* acc = accbuf.data();
  for (int co = 0; co < co_n; ++co) {
    float* out_c = out + static_cast<std::size_t>(co) * h * w;
    const float* k_co = kernel + static_cast<std::size_t>(co) * ci_n * k * k;
    for (int y = 0; y < h; ++y) {
      const float b = bias ? bias[co] : 0.0f;
      for (int x = 0; x < w; ++x) acc[x] = b;
      for (int ci = 0; ci < ci_n; ++ci) {
        const float* in_c = in + static_cast<std::size_t>(ci) * h * w;
        const float* k_ci = k_co + static_cast<std::size_t>(ci) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y + ky - p;
          if (iy < 0 || iy >= h) continue;
          const float* in_row = in_c + static_cast<std::size_t>(iy) * w;
          for (int kx = 0; kx < k; ++kx) {
            const float wgt = k_ci[ky * k + kx];
            const int xlo = std::max(0, p - kx);
            const int xhi = std::min(w, w + p - kx);
            const float* __restrict ir = in_row + kx - p;
            for (int x = xlo; x < xhi; ++x) acc[x] += wgt * ir[x];
          }
        }
      }
      std::memcpy(out_c + static_cast<std::size_t>(y) * w, acc, sizeof(float) * w);
    }
  }
}

// d(conv)/d(kernel): correlation of grad_out rows with input rows.
void conv2d_kernel_grad(const float* in, int ci_n, int h, int w, const float* gout, int co_n,
                        int k, float* gkernel) {
  const int p = k / 2;
  for (int co = 0; co < co_n; ++co) {
    const float* g_c = gout + static_cast<std::size_t>(co) * h * w;
    for (int ci = 0; ci < ci_n; ++ci) {
      const float* in_c = in + static_cast<std::size_t>(ci) * h * w;
      float* gk = gkernel + (static_cast<std::size_t>(co) * ci_n + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int xlo = std::max(0, p - kx);
          const int xhi = std::min(w, w + p - kx);
          const int n = xhi - xlo;
          if (n <= 0) continue;
          double acc = 0.0;
          for (int y = 0; y < h; ++y) {
            const int iy = y + ky - p;
            if (iy < 0 || iy >= h) continue;
            const float* g_row = g_c + static_cast<std::size_t>(y) * w + xlo;
            const float* i_row = in_c + static_cast<std::size_t>(iy) * w + xlo + kx - p;
            acc += static_cast<double>(
                Eigen::Map<const Eigen::VectorXf>(g_row, n).dot(Eigen::Map<const Eigen::VectorXf>(i_row, n)));
          }
          gk[ky * k + kx] += static_cast<float>(acc);
        }
      }
    }
  }
}

}  // namespace

// ---- GradientTape -----------------------------------------------------------

GradientTape::GradientTape() : id_(g_tape_counter.fetch_add(1)) {
  prev_ = g_active_tape;
  g_active_tape = this;
}

GradientTape::~GradientTape() { g_active_tape = prev_; }

GradientTape* GradientTape::active() { return g_active_tape; }

int GradientTape::watch(Tensor& t) {
  if (tracks(t)) return t.node;
  const int id = record(t.size(), {}, nullptr);
  t.node = id;
  t.tape_id = id_;
  return id;
}

int GradientTape::record(std::int64_t out_size, std::vector<int> inputs, BackwardFn fn) {
  nodes_.push_back(Node{out_size, std::move(inputs), std::move(fn)});
  return static_cast<int>(nodes_.size()) - 1;
}

Eigen::ArrayXf& GradientTape::grad_buffer(int node) {
  Eigen::ArrayXf& g = grads_[static_cast<std::size_t>(node)];
  if (g.size() == 0) g = Eigen::ArrayXf::Zero(nodes_[static_cast<std::size_t>(node)].size);
  return g;
}

void GradientTape::backward(const Tensor& loss) {
  if (!loss.is_scalar()) fail("backward: loss must be scalar, got " + shape_str(loss.shape));
  if (!tracks(loss)) fail("backward: loss is not recorded on the active tape");
  grads_.assign(nodes_.size(), Eigen::ArrayXf());
  grad_buffer(loss.node).setConstant(1.0f);
  for (int i = loss.node; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.back) continue;
    const Eigen::ArrayXf& g = grads_[static_cast<std::size_t>(i)];
    if (g.size() == 0) continue;  // loss never reached this node
    n.back(g, *this);
  }
  ran_backward_ = true;
}

Eigen::ArrayXf GradientTape::grad(const Tensor& t) const {
  if (!ran_backward_ || !tracks(t) || grads_[static_cast<std::size_t>(t.node)].size() == 0)
    return Eigen::ArrayXf::Zero(t.size());
  return grads_[static_cast<std::size_t>(t.node)];
}

// ---- ParameterSet -----------------------------------------------------------

Parameter& ParameterSet::add(std::string name, Tensor init, bool trainable) {
  if (contains(name)) fail("duplicate parameter name: " + name);
  params_.push_back(Parameter{std::move(name), std::move(init), trainable});
  return params_.back();
}

Parameter& ParameterSet::at(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  fail("unknown parameter: " + std::string(name));
}

const Parameter& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

void ParameterSet::watch_all(GradientTape& tape) {
  for (auto& p : params_)
    if (p.trainable) tape.watch(p.value);
}

void ParameterSet::adopt(ParameterSet&& other) {
  for (auto& p : other.params_) {
    if (contains(p.name)) fail("duplicate parameter name: " + p.name);
    params_.push_back(std::move(p));
  }
  other.params_.clear();
}

namespace {

std::string digest_to_hex(const unsigned char* md, unsigned int len) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

}  // namespace

std::string sha256_hex(const void* data, std::size_t n) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, data, n);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  return digest_to_hex(md, len);
}

std::string ParameterSet::digest() const {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const auto& p : params_) {
    EVP_DigestUpdate(ctx, p.name.data(), p.name.size() + 1);
    const std::uint32_t ndim = static_cast<std::uint32_t>(p.value.shape.size());
    EVP_DigestUpdate(ctx, &ndim, sizeof(ndim));
    for (int e : p.value.shape) {
      const std::int32_t v = e;
      EVP_DigestUpdate(ctx, &v, sizeof(v));
    }
    EVP_DigestUpdate(ctx, p.value.data.data(), sizeof(float) * p.value.data.size());
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  return digest_to_hex(md, len);
}

std::map<std::string, Tensor> backward(const Tensor& loss, GradientTape& tape,
                                       const ParameterSet& params) {
  tape.backward(loss);
  std::map<std::string, Tensor> grads;
  for (const auto& p : params.items()) {
    if (p.trainable)
      grads.emplace(p.name, Tensor(p.value.shape, tape.grad(p.value)));
    else
      grads.emplace(p.name, Tensor(p.value.shape));
  }
  return grads;
}

// ---- elementwise ops --------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape, a.data + b.data);
  const int na = node_of(a), nb = node_of(b);
  finish(out, {na, nb}, [na, nb](const Eigen::ArrayXf& g, GradientTape& t) {
    if (na >= 0) t.grad_buffer(na) += g;
    if (nb >= 0) t.grad_buffer(nb) += g;
  });
  RAC_FINITE(out, "add");
  return out;
}

Tensor add(const Tensor& a, float b) {
  Tensor out(a.shape, a.data + b);
  const int na = node_of(a);
  finish(out, {na}, [na](const Eigen::ArrayXf& g, GradientTape& t) { t.grad_buffer(na) += g; });
  RAC_FINITE(out, "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape, a.data - b.data);
  const int na = node_of(a), nb = node_of(b);
  finish(out, {na, nb}, [na, nb](const Eigen::ArrayXf& g, GradientTape& t) {
    if (na >= 0) t.grad_buffer(na) += g;
    if (nb >= 0) t.grad_buffer(nb) -= g;
  });
  RAC_FINITE(out, "sub");
  return out;
}

Tensor sub(const Tensor& a, float b) { return add(a, -b); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape, a.data * b.data);
  const int na = node_of(a), nb = node_of(b);
  Eigen::ArrayXf av, bv;
  if (nb >= 0) av = a.data;
  if (na >= 0) bv = b.data;
  finish(out, {na, nb}, [na, nb, av, bv](const Eigen::ArrayXf& g, GradientTape& t) {
    if (na >= 0) t.grad_buffer(na) += g * bv;
    if (nb >= 0) t.grad_buffer(nb) += g * av;
  });
  RAC_FINITE(out, "mul");
  return out;
}

Tensor scale(const Tensor& a, float s) {
  Tensor out(a.shape, a.data * s);
  const int na = node_of(a);
  finish(out, {na}, [na, s](const Eigen::ArrayXf& g, GradientTape& t) { t.grad_buffer(na) += g * s; });
  RAC_FINITE(out, "scale");
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape, a.data.max(0.0f));
  const int na = node_of(a);
  if (na >= 0) {
    Eigen::ArrayXf x = a.data;
    finish(out, {na}, [na, x](const Eigen::ArrayXf& g, GradientTape& t) {
      t.grad_buffer(na) += g * (x > 0.0f).cast<float>();
    });
  }
  RAC_FINITE(out, "relu");
  return out;
}

Tensor silu(const Tensor& a) {
  const Eigen::ArrayXf sig = sigmoid(a.data);
  Tensor out(a.shape, a.data * sig);
  const int na = node_of(a);
  if (na >= 0) {
    Eigen::ArrayXf x = a.data;
    Eigen::ArrayXf s = sig;
    finish(out, {na}, [na, x, s](const Eigen::ArrayXf& g, GradientTape& t) {
      t.grad_buffer(na) += g * (s * (1.0f + x * (1.0f - s)));
    });
  }
  RAC_FINITE(out, "silu");
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out(a.shape, a.data.exp());
  const int na = node_of(a);
  if (na >= 0) {
    Eigen::ArrayXf y = out.data;
    finish(out, {na}, [na, y](const Eigen::ArrayXf& g, GradientTape& t) {
      t.grad_buffer(na) += g * y;
    });
  }
  RAC_FINITE(out, "exp");
  return out;
}

Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b, float scalar) {
  switch (op) {
    case EwOp::Add:
      return b ? add(a, *b) : add(a, scalar);
    case EwOp::Sub:
      return b ? sub(a, *b) : sub(a, scalar);
    case EwOp::Mul:
      if (!b) fail("elementwise mul: second tensor required");
      return mul(a, *b);
    case EwOp::Scale:
      return scale(a, scalar);
    case EwOp::Relu:
      return relu(a);
    case EwOp::Silu:
      return silu(a);
    case EwOp::Exp:
      return exp(a);
  }
  fail("elementwise: unknown op kind");
}

// ---- structured ops ---------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  const Chw in = chw(input, "conv2d");
  if (kernel.shape.size() != 4) fail("conv2d: kernel must be CoxCixkxk, got " + shape_str(kernel.shape));
  const int co_n = kernel.shape[0], ci_n = kernel.shape[1], k = kernel.shape[2];
  if (kernel.shape[3] != k) fail("conv2d: kernel must be square, got " + shape_str(kernel.shape));
  if (k % 2 == 0) fail("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (ci_n != in.c)
    fail("conv2d: channel mismatch, input has " + std::to_string(in.c) + " channels, kernel expects " +
         std::to_string(ci_n));
  if (bias.shape != Shape{co_n}) fail("conv2d: bias must be [" + std::to_string(co_n) + "]");

  Tensor out(Shape{co_n, in.h, in.w});
  conv2d_raw(input.data.data(), in.c, in.h, in.w, kernel.data.data(), k, bias.data.data(), co_n,
             out.data.data());

  const int ni = node_of(input), nk = node_of(kernel), nb = node_of(bias);
  if (ni >= 0 || nk >= 0 || nb >= 0) {
    Eigen::ArrayXf in_v, k_v;
    if (nk >= 0) in_v = input.data;
    if (ni >= 0) k_v = kernel.data;
    const int h = in.h, w = in.w, ci = in.c;
    finish(out, {ni, nk, nb},
           [=](const Eigen::ArrayXf& g, GradientTape& t) {
             if (ni >= 0) {
               // flip spatially and swap in/out channel roles
               Eigen::ArrayXf flipped(static_cast<std::int64_t>(ci) * co_n * k * k);
               for (int c_out = 0; c_out < co_n; ++c_out)
                 for (int c_in = 0; c_in < ci; ++c_in)
                   for (int ky = 0; ky < k; ++ky)
                     for (int kx = 0; kx < k; ++kx)
                       flipped[((static_cast<std::int64_t>(c_in) * co_n + c_out) * k + ky) * k + kx] =
                           k_v[((static_cast<std::int64_t>(c_out) * ci + c_in) * k + (k - 1 - ky)) * k +
                               (k - 1 - kx)];
               Eigen::ArrayXf gin = Eigen::ArrayXf::Zero(static_cast<std::int64_t>(ci) * h * w);
               conv2d_raw(g.data(), co_n, h, w, flipped.data(), k, nullptr, ci, gin.data());
               t.grad_buffer(ni) += gin;
             }
             if (nk >= 0) {
               Eigen::ArrayXf gk = Eigen::ArrayXf::Zero(static_cast<std::int64_t>(co_n) * ci * k * k);
               conv2d_kernel_grad(in_v.data(), ci, h, w, g.data(), co_n, k, gk.data());
               t.grad_buffer(nk) += gk;
             }
             if (nb >= 0) {
               Eigen::ArrayXf& gb = t.grad_buffer(nb);
               for (int c_out = 0; c_out < co_n; ++c_out)
                 gb[c_out] += g.segment(static_cast<std::int64_t>(c_out) * h * w, h * w).sum();
             }
           });
  }
  RAC_FINITE(out, "conv2d");
  return out;
}

Tensor avg_pool2d(const Tensor& input, int f) {
  const Chw in = chw(input, "avg_pool2d");
  if (f < 1) fail("avg_pool2d: factor must be positive");
  if (in.h % f != 0 || in.w % f != 0)
    fail("avg_pool2d: factor " + std::to_string(f) + " does not divide " + shape_str(input.shape));
  const int oh = in.h / f, ow = in.w / f;
  Tensor out(Shape{in.c, oh, ow});
  // Mean in double so pooling a block-constant input reproduces the constant
  // exactly (avg_pool2d ∘ upsample_nearest must be the identity).
  const double denom = static_cast<double>(f) * static_cast<double>(f);
  const float inv = 1.0f / (static_cast<float>(f) * static_cast<float>(f));
  for (int c = 0; c < in.c; ++c) {
    const float* ic = input.data.data() + static_cast<std::size_t>(c) * in.h * in.w;
    float* oc = out.data.data() + static_cast<std::size_t>(c) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) acc += ic[(y * f + dy) * in.w + x * f + dx];
        oc[y * ow + x] = static_cast<float>(acc / denom);
      }
  }
  const int ni = node_of(input);
  if (ni >= 0) {
    const int c_n = in.c, h = in.h, w = in.w;
    finish(out, {ni}, [=](const Eigen::ArrayXf& g, GradientTape& t) {
      Eigen::ArrayXf& gi = t.grad_buffer(ni);
      for (int c = 0; c < c_n; ++c) {
        const float* gc = g.data() + static_cast<std::size_t>(c) * oh * ow;
        float* gic = gi.data() + static_cast<std::size_t>(c) * h * w;
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) {
            const float v = gc[y * ow + x] * inv;
            for (int dy = 0; dy < f; ++dy)
              for (int dx = 0; dx < f; ++dx) gic[(y * f + dy) * w + x * f + dx] += v;
          }
      }
    });
  }
  RAC_FINITE(out, "avg_pool2d");
  return out;
}

Tensor upsample_nearest(const Tensor& input, int f) {
  const Chw in = chw(input, "upsample_nearest");
  if (f < 1) fail("upsample_nearest: factor must be positive");
  const int oh = in.h * f, ow = in.w * f;
  Tensor out(Shape{in.c, oh, ow});
  for (int c = 0; c < in.c; ++c) {
    const float* ic = input.data.data() + static_cast<std::size_t>(c) * in.h * in.w;
    float* oc = out.data.data() + static_cast<std::size_t>(c) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) oc[y * ow + x] = ic[(y / f) * in.w + x / f];
  }
  const int ni = node_of(input);
  if (ni >= 0) {
    const int c_n = in.c, h = in.h, w = in.w;
    finish(out, {ni}, [=](const Eigen::ArrayXf& g, GradientTape& t) {
      Eigen::ArrayXf& gi = t.grad_buffer(ni);
      for (int c = 0; c < c_n; ++c) {
        const float* gc = g.data() + static_cast<std::size_t>(c) * oh * ow;
        float* gic = gi.data() + static_cast<std::size_t>(c) * h * w;
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) gic[(y / f) * w + x / f] += gc[y * ow + x];
      }
    });
  }
  RAC_FINITE(out, "upsample_nearest");
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) fail("concat_channels: no parts");
  const Chw first = chw(parts[0], "concat_channels");
  int total_c = 0;
  for (const Tensor& p : parts) {
    const Chw pc = chw(p, "concat_channels");
    if (pc.h != first.h || pc.w != first.w)
      fail("concat_channels: spatial mismatch " + shape_str(parts[0].shape) + " vs " + shape_str(p.shape));
    total_c += pc.c;
  }
  Tensor out(Shape{total_c, first.h, first.w});
  std::int64_t off = 0;
  std::vector<int> nodes;
  std::vector<std::int64_t> offsets, sizes;
  for (const Tensor& p : parts) {
    out.data.segment(off, p.size()) = p.data;
    nodes.push_back(node_of(p));
    offsets.push_back(off);
    sizes.push_back(p.size());
    off += p.size();
  }
  finish(out, std::vector<int>(nodes), [nodes, offsets, sizes](const Eigen::ArrayXf& g, GradientTape& t) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i] >= 0) t.grad_buffer(nodes[i]) += g.segment(offsets[i], sizes[i]);
  });
  RAC_FINITE(out, "concat_channels");
  return out;
}

Tensor concat_channels(std::initializer_list<Tensor> parts) {
  return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_channels(const Tensor& input, int lo, int hi) {
  const Chw in = chw(input, "slice_channels");
  if (lo < 0 || hi <= lo || hi > in.c)
    fail("slice_channels: range [" + std::to_string(lo) + "," + std::to_string(hi) + ") out of 0.." +
         std::to_string(in.c));
  const std::int64_t plane = static_cast<std::int64_t>(in.h) * in.w;
  Tensor out(Shape{hi - lo, in.h, in.w});
  out.data = input.data.segment(lo * plane, static_cast<std::int64_t>(hi - lo) * plane);
  const int ni = node_of(input);
  if (ni >= 0) {
    finish(out, {ni}, [=](const Eigen::ArrayXf& g, GradientTape& t) {
      t.grad_buffer(ni).segment(lo * plane, static_cast<std::int64_t>(hi - lo) * plane) += g;
    });
  }
  RAC_FINITE(out, "slice_channels");
  return out;
}

// ---- reductions -------------------------------------------------------------

Tensor reduce_mean_sq(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "reduce_mean_sq");
  const Eigen::ArrayXf diff = a.data - b.data;
  const double m = diff.cast<double>().square().sum() / static_cast<double>(diff.size());
  Tensor out = Tensor::scalar(static_cast<float>(m));
  const int na = node_of(a), nb = node_of(b);
  if (na >= 0 || nb >= 0) {
    Eigen::ArrayXf d = diff * (2.0f / static_cast<float>(diff.size()));
    finish(out, {na, nb}, [na, nb, d](const Eigen::ArrayXf& g, GradientTape& t) {
      if (na >= 0) t.grad_buffer(na) += g[0] * d;
      if (nb >= 0) t.grad_buffer(nb) -= g[0] * d;
    });
  }
  RAC_FINITE(out, "reduce_mean_sq");
  return out;
}

Tensor reduce_mean(const Tensor& a) {
  const double m = a.data.cast<double>().sum() / static_cast<double>(a.size());
  Tensor out = Tensor::scalar(static_cast<float>(m));
  const int na = node_of(a);
  if (na >= 0) {
    const float inv = 1.0f / static_cast<float>(a.size());
    finish(out, {na}, [na, inv](const Eigen::ArrayXf& g, GradientTape& t) {
      t.grad_buffer(na) += g[0] * inv;
    });
  }
  RAC_FINITE(out, "reduce_mean");
  return out;
}

// ---- initialization / sampling ----------------------------------------------

Tensor randn(Shape shape, std::mt19937& rng, float stddev) {
  std::normal_distribution<float> d(0.0f, stddev);
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = d(rng);
  return t;
}

Tensor he_normal(Shape kernel_shape, std::mt19937& rng) {
  std::int64_t fan_in = 1;
  for (std::size_t i = 1; i < kernel_shape.size(); ++i) fan_in *= kernel_shape[i];
  const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
  return randn(std::move(kernel_shape), rng, stddev);
}

}  // namespace rac
