#include "snncodec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "snncodec/error.hpp"
#include "snncodec/kernels.hpp"

namespace snncodec {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::Node;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

namespace {

thread_local bool grad_enabled = true;

void require_positive_dims(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Wraps a freshly computed buffer, recording history only when some input
// needs gradients.
Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  bool any = false;
  for (const Tensor* in : inputs) any = any || in->requires_grad();
  if (any && grad_enabled) {
    node->requires_grad = true;
    for (const Tensor* in : inputs) node->parents.push_back(in->node());
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

inline bool wants(const std::shared_ptr<Node>& n) { return n->requires_grad; }

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> transpose(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
  }
  return out;
}

void gemm(const double* a, std::size_t m, std::size_t k, const double* b, std::size_t n, double* c) {
  kernels::active().gemm({a, m, k, k}, {b, k, n, n}, {c, m, n, n});
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor handle

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }

NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }

Tensor::Tensor() = default;

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  require_positive_dims(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " + std::to_string(values.size()));
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape()));
  return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->values.size(); }

std::span<const double> Tensor::values() const { return node_->values; }

std::span<double> Tensor::mutable_values() { return node_->values; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->values[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw ContractError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return !node_->backward; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad_buffer(); }

std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(shape(), node_->values, false); }

Tensor Tensor::clone() const { return Tensor(shape(), node_->values, requires_grad()); }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!wants(p)) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    if (wants(self.parents[0])) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self.parents[1])) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (wants(pa)) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->values[i];
    }
    if (wants(pb)) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->values[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {&a}, [factor](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double offset) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v += offset;
  return make_result(a.shape(), std::move(out), {&a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(av[i]);
  return make_result(a.shape(), std::move(out), {&a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = self.values[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return make_result({1}, {total}, {&a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.values()) total += v;
  return make_result({1}, {total / n}, {&a}, [n](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (double& v : g) v += self.grad[0] / n;
  });
}

// ---------------------------------------------------------------------------
// Dense layers

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(1) || b.dim(0) != w.dim(0)) {
    throw DimensionError("linear: incompatible shapes x" + shape_string(x.shape()) + " w" + shape_string(w.shape()) +
                         " b" + shape_string(b.shape()));
  }
  const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  std::vector<double> out(batch * out_dim);
  const auto bv = b.values();
  for (std::size_t i = 0; i < batch; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * out_dim);
  const auto wt = transpose(w.values().data(), out_dim, in);
  gemm(x.values().data(), batch, in, wt.data(), out_dim, out.data());
  return make_result({batch, out_dim}, std::move(out), {&x, &w, &b}, [batch, in, out_dim](Node& self) {
    const auto& px = self.parents[0];
    const auto& pw = self.parents[1];
    const auto& pb = self.parents[2];
    if (wants(px)) {
      gemm(self.grad.data(), batch, out_dim, pw->values.data(), in, px->grad_buffer().data());
    }
    if (wants(pw)) {
      const auto gt = transpose(self.grad.data(), batch, out_dim);
      gemm(gt.data(), out_dim, batch, px->values.data(), in, pw->grad_buffer().data());
    }
    if (wants(pb)) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < out_dim; ++j) g[j] += self.grad[i * out_dim + j];
      }
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t channels, height, width, out_channels, kh, kw, stride, pad, out_h, out_w;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

void im2col(const double* image, const ConvGeometry& g, double* col) {
  const std::size_t pixels = g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* image) {
  const std::size_t pixels = g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

// Inputs at or below this fraction of nonzeros skip im2col: each nonzero
// input is scattered straight into the output pixels it touches.
constexpr double kSparseDensity = 0.3;

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  kernels::active().axpy(alpha, {x, n}, {y, n});
}

// Calls fn(value, patch_row, output_pixel) for every nonzero input element
// and every kernel tap that maps it onto a valid output pixel.
template <typename Fn>
void scatter_patches(const double* image, const ConvGeometry& g, Fn&& fn) {
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t iy = 0; iy < g.height; ++iy) {
      const double* row = image + (c * g.height + iy) * g.width;
      for (std::size_t ix = 0; ix < g.width; ++ix) {
        const double v = row[ix];
        if (v == 0.0) continue;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          const std::size_t ny = iy + g.pad;
          if (ny < ki || (ny - ki) % g.stride != 0) continue;
          const std::size_t oy = (ny - ki) / g.stride;
          if (oy >= g.out_h) continue;
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            const std::size_t nx = ix + g.pad;
            if (nx < kj || (nx - kj) % g.stride != 0) continue;
            const std::size_t ox = (nx - kj) / g.stride;
            if (ox >= g.out_w) continue;
            fn(v, (c * g.kh + ki) * g.kw + kj, oy * g.out_w + ox);
          }
        }
      }
    }
  }
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || kernel.rank() != 4 || x.dim(1) != kernel.dim(1)) {
    throw DimensionError("conv2d: incompatible shapes x" + shape_string(x.shape()) + " kernel" +
                         shape_string(kernel.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), kernel.dim(0), kernel.dim(2), kernel.dim(3), stride, pad, 0, 0};
  const std::size_t span_h = g.height + 2 * pad, span_w = g.width + 2 * pad;
  if (g.kh > span_h || g.kw > span_w) throw DimensionError("conv2d: kernel larger than padded input");
  if ((span_h - g.kh) % stride != 0 || (span_w - g.kw) % stride != 0) {
    throw DimensionError("conv2d: non-integral output size for stride " + std::to_string(stride));
  }
  g.out_h = (span_h - g.kh) / stride + 1;
  g.out_w = (span_w - g.kw) / stride + 1;

  const std::size_t batch = x.dim(0);
  const std::size_t in_size = g.channels * g.height * g.width;
  const std::size_t out_size = g.out_channels * g.pixels();
  const auto xv = x.values();
  const std::size_t nonzero =
      static_cast<std::size_t>(std::count_if(xv.begin(), xv.end(), [](double v) { return v != 0.0; }));
  const bool sparse = static_cast<double>(nonzero) <= kSparseDensity * static_cast<double>(xv.size());

  std::vector<double> out(batch * out_size, 0.0);
  if (sparse) {
    const auto kt = transpose(kernel.values().data(), g.out_channels, g.patch());
    std::vector<double> out_t(g.pixels() * g.out_channels);
    for (std::size_t b = 0; b < batch; ++b) {
      std::fill(out_t.begin(), out_t.end(), 0.0);
      scatter_patches(xv.data() + b * in_size, g, [&](double v, std::size_t j, std::size_t p) {
        axpy(v, kt.data() + j * g.out_channels, out_t.data() + p * g.out_channels, g.out_channels);
      });
      double* dst = out.data() + b * out_size;
      for (std::size_t p = 0; p < g.pixels(); ++p) {
        for (std::size_t o = 0; o < g.out_channels; ++o) dst[o * g.pixels() + p] = out_t[p * g.out_channels + o];
      }
    }
  } else {
    std::vector<double> col(g.patch() * g.pixels());
    for (std::size_t b = 0; b < batch; ++b) {
      im2col(xv.data() + b * in_size, g, col.data());
      gemm(kernel.values().data(), g.out_channels, g.patch(), col.data(), g.pixels(), out.data() + b * out_size);
    }
  }
  return make_result(
      {batch, g.out_channels, g.out_h, g.out_w}, std::move(out), {&x, &kernel},
      [g, batch, in_size, out_size, sparse](Node& self) {
        const auto& px = self.parents[0];
        const auto& pk = self.parents[1];
        std::vector<double> col(g.patch() * g.pixels());
        std::vector<double> kt;
        if (wants(px)) kt = transpose(pk->values.data(), g.out_channels, g.patch());
        std::vector<double> dk_t;
        if (wants(pk) && sparse) dk_t.assign(g.patch() * g.out_channels, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* gout = self.grad.data() + b * out_size;
          if (wants(pk)) {
            if (sparse) {
              const auto g_t = transpose(gout, g.out_channels, g.pixels());
              scatter_patches(px->values.data() + b * in_size, g, [&](double v, std::size_t j, std::size_t p) {
                axpy(v, g_t.data() + p * g.out_channels, dk_t.data() + j * g.out_channels, g.out_channels);
              });
            } else {
              im2col(px->values.data() + b * in_size, g, col.data());
              const auto colt = transpose(col.data(), g.patch(), g.pixels());
              gemm(gout, g.out_channels, g.pixels(), colt.data(), g.patch(), pk->grad_buffer().data());
            }
          }
          if (wants(px)) {
            std::fill(col.begin(), col.end(), 0.0);
            gemm(kt.data(), g.patch(), g.out_channels, gout, g.pixels(), col.data());
            col2im_add(col.data(), g, px->grad_buffer().data() + b * in_size);
          }
        }
        if (!dk_t.empty()) {
          auto& dk = pk->grad_buffer();
          for (std::size_t j = 0; j < g.patch(); ++j) {
            for (std::size_t o = 0; o < g.out_channels; ++o) dk[o * g.patch() + j] += dk_t[j * g.out_channels + o];
          }
        }
      });
}

Tensor avg_pool2d(const Tensor& x, std::size_t window) {
  if (x.rank() != 4) throw DimensionError("avg_pool2d: expected [B,C,H,W], got " + shape_string(x.shape()));
  if (window == 0 || x.dim(2) < window || x.dim(3) < window) {
    throw DimensionError("avg_pool2d: window " + std::to_string(window) + " does not fit " + shape_string(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / window, ow = w / window;
  const double inv = 1.0 / static_cast<double>(window * window);
  std::vector<double> out(planes * oh * ow, 0.0);
  const auto xv = x.values();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) acc += xv[(p * h + oy * window + dy) * w + ox * window + dx];
        }
        out[(p * oh + oy) * ow + ox] = acc * inv;
      }
    }
  }
  return make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {&x}, [=](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double share = self.grad[(p * oh + oy) * ow + ox] * inv;
          for (std::size_t dy = 0; dy < window; ++dy) {
            for (std::size_t dx = 0; dx < window; ++dx) g[(p * h + oy * window + dy) * w + ox * window + dx] += share;
          }
        }
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_positive_dims(shape);
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {&x}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Spiking nonlinearity

Tensor spike(const Tensor& u, const SpikeBackward& bw) {
  if (!(bw.alpha > 0.0)) throw ContractError("spike: alpha must be positive");
  std::vector<double> out(u.numel());
  const auto uv = u.values();
  const double alpha = bw.alpha;
  if (bw.mode == SpikeBackward::Mode::Relaxed) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(alpha * uv[i]);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = uv[i] >= 0.0 ? 1.0 : 0.0;
  }
  if (bw.mode == SpikeBackward::Mode::ExactZero) {
    // Gradient blockage: nothing upstream can receive gradient through this
    // output, so it is not recorded at all.
    return Tensor(u.shape(), std::move(out));
  }
  return make_result(u.shape(), std::move(out), {&u}, [alpha](Node& self) {
    const auto& pu = self.parents[0];
    auto& g = pu->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = stable_sigmoid(alpha * pu->values[i]);
      g[i] += self.grad[i] * alpha * s * (1.0 - s);
    }
  });
}

Tensor lif_scan(const Tensor& currents, const Tensor& leak, const Tensor& gain, double v_th,
                const SpikeBackward& bw) {
  if (!(bw.alpha > 0.0)) throw ContractError("lif_scan: alpha must be positive");
  if (currents.rank() < 3) throw DimensionError("lif_scan: currents must be [T, B, C, ...]");
  const std::size_t steps = currents.dim(0), batch = currents.dim(1), channels = currents.dim(2);
  const std::size_t pc = leak.rank() == 2 ? leak.dim(1) : 0;
  if (leak.rank() != 2 || leak.dim(0) != steps || leak.shape() != gain.shape() || (pc != 1 && pc != channels)) {
    throw DimensionError("lif_scan: leak/gain " + shape_string(leak.shape()) + " do not fit currents " +
                         shape_string(currents.shape()));
  }
  const std::size_t frame = currents.numel() / steps;
  const std::size_t inner = frame / (batch * channels);
  const auto cv = currents.values();
  const auto lv = leak.values();
  const auto gv = gain.values();
  const double alpha = bw.alpha;
  const bool relaxed = bw.mode == SpikeBackward::Mode::Relaxed;

  // Pre-reset potentials are kept for the backward pass.
  std::vector<double> h(currents.numel());
  std::vector<double> out(currents.numel());
  std::vector<double> v(frame, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t p = t * pc + (pc == 1 ? 0 : c);
        const double a = lv[p], g = gv[p];
        const std::size_t base = (b * channels + c) * inner;
        for (std::size_t i = base; i < base + inner; ++i) {
          const std::size_t k = t * frame + i;
          const double hk = a * v[i] + g * cv[k];
          const double u = hk - v_th;
          const double sk = relaxed ? stable_sigmoid(alpha * u) : (u >= 0.0 ? 1.0 : 0.0);
          h[k] = hk;
          out[k] = sk;
          v[i] = hk - sk * v_th;
        }
      }
    }
  }

  const SpikeBackward::Mode mode = bw.mode;
  return make_result(currents.shape(), std::move(out), {&currents, &leak, &gain},
                     [h = std::move(h), steps, batch, channels, inner, frame, pc, alpha, v_th, mode](Node& self) {
                       const auto& pcur = self.parents[0];
                       const auto& pleak = self.parents[1];
                       const auto& pgain = self.parents[2];
                       std::vector<double>* gcur = wants(pcur) ? &pcur->grad_buffer() : nullptr;
                       std::vector<double>* gleak = wants(pleak) ? &pleak->grad_buffer() : nullptr;
                       std::vector<double>* ggain = wants(pgain) ? &pgain->grad_buffer() : nullptr;
                       const auto& cv = pcur->values;
                       const auto& lv = pleak->values;
                       const auto& gv = pgain->values;
                       // gv_next holds dL/dv_t flowing back from step t+1.
                       std::vector<double> g_next(frame, 0.0);
                       for (std::size_t t = steps; t-- > 0;) {
                         for (std::size_t b = 0; b < batch; ++b) {
                           for (std::size_t c = 0; c < channels; ++c) {
                             const std::size_t p = t * pc + (pc == 1 ? 0 : c);
                             const double a = lv[p], g = gv[p];
                             double da = 0.0, dg = 0.0;
                             const std::size_t base = (b * channels + c) * inner;
                             for (std::size_t i = base; i < base + inner; ++i) {
                               const std::size_t k = t * frame + i;
                               const double gvk = g_next[i];
                               double gh = gvk;
                               if (mode != SpikeBackward::Mode::ExactZero) {
                                 const double sg = stable_sigmoid(alpha * (h[k] - v_th));
                                 gh += (self.grad[k] - v_th * gvk) * alpha * sg * (1.0 - sg);
                               }
                               if (t > 0) {
                                 // v_{t-1} = h_{t-1} - s_{t-1}·v_th
                                 const std::size_t kp = k - frame;
                                 const double v_prev = h[kp] - self.values[kp] * v_th;
                                 da += gh * v_prev;
                               }
                               dg += gh * cv[k];
                               if (gcur) (*gcur)[k] += gh * g;
                               g_next[i] = gh * a;
                             }
                             if (gleak) (*gleak)[p] += da;
                             if (ggain) (*ggain)[p] += dg;
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Loss

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  std::vector<double> probs(batch * classes);
  double loss = 0.0;
  const auto lv = logits.values();
  for (std::size_t i = 0; i < batch; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(label) + " out of range");
    }
    const double* row = lv.data() + i * classes;
    const double peak = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) z += std::exp(row[k] - peak);
    for (std::size_t k = 0; k < classes; ++k) probs[i * classes + k] = std::exp(row[k] - peak) / z;
    loss += -(row[label] - peak - std::log(z));
  }
  loss /= static_cast<double>(batch);
  std::vector<int> owned(labels.begin(), labels.end());
  return make_result({1}, {loss}, {&logits},
                     [probs = std::move(probs), owned = std::move(owned), batch, classes](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       const double s = self.grad[0] / static_cast<double>(batch);
                       for (std::size_t i = 0; i < batch; ++i) {
                         for (std::size_t k = 0; k < classes; ++k) {
                           const double target = static_cast<int>(k) == owned[i] ? 1.0 : 0.0;
                           g[i * classes + k] += s * (probs[i * classes + k] - target);
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Layout

Tensor expand_channels(const Tensor& p, const Shape& shape, std::size_t axis) {
  if (p.rank() != 1 || axis >= shape.size() || shape[axis] != p.dim(0)) {
    throw DimensionError("expand_channels: " + shape_string(p.shape()) + " onto " + shape_string(shape) +
                         " at axis " + std::to_string(axis));
  }
  const std::size_t channels = p.dim(0);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t total = shape_numel(shape);
  std::vector<double> out(total);
  const auto pv = p.values();
  for (std::size_t i = 0; i < total; ++i) out[i] = pv[(i / inner) % channels];
  return make_result(shape, std::move(out), {&p}, [inner, channels](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[(i / inner) % channels] += self.grad[i];
  });
}

Tensor select(const Tensor& x, std::size_t index) {
  if (x.rank() < 2 || index >= x.dim(0)) {
    throw DimensionError("select: index " + std::to_string(index) + " on " + shape_string(x.shape()));
  }
  Shape shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t stride = shape_numel(shape);
  const auto xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(index * stride),
                          xv.begin() + static_cast<std::ptrdiff_t>((index + 1) * stride));
  return make_result(std::move(shape), std::move(out), {&x}, [index, stride](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < stride; ++i) g[index * stride + i] += self.grad[i];
  });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("stack: no tensors");
  const Shape& inner = parts.front().shape();
  const std::size_t stride = parts.front().numel();
  std::vector<double> out;
  out.reserve(stride * parts.size());
  bool any = false;
  for (const Tensor& p : parts) {
    if (p.shape() != inner) throw DimensionError("stack: mismatched shapes");
    out.insert(out.end(), p.values().begin(), p.values().end());
    any = any || p.requires_grad();
  }
  any = any && grad_enabled;
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(out);
  if (any) {
    node->requires_grad = true;
    for (const Tensor& p : parts) node->parents.push_back(p.node());
    node->backward = [stride](Node& self) {
      for (std::size_t t = 0; t < self.parents.size(); ++t) {
        if (!wants(self.parents[t])) continue;
        auto& g = self.parents[t]->grad_buffer();
        for (std::size_t i = 0; i < stride; ++i) g[i] += self.grad[t * stride + i];
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor mean_leading(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("mean_leading: need rank >= 2, got " + shape_string(x.shape()));
  const std::size_t steps = x.dim(0);
  Shape shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t stride = shape_numel(shape);
  const double inv = 1.0 / static_cast<double>(steps);
  std::vector<double> out(stride, 0.0);
  const auto xv = x.values();
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < stride; ++i) out[i] += xv[t * stride + i];
  }
  for (double& v : out) v *= inv;
  return make_result(std::move(shape), std::move(out), {&x}, [steps, stride, inv](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t i = 0; i < stride; ++i) g[t * stride + i] += self.grad[i] * inv;
    }
  });
}

// ---------------------------------------------------------------------------
// Reverse pass

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS over nodes that carry gradient.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward) n->grad.clear();
  }
  Node* root = loss.node().get();
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    if (!n->grad.empty()) n->backward(*n);
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw ContractError("grad_check: eps must lie in [1e-6, 1e-3]");
  std::vector<Tensor> leaves = params;
  for (Tensor& p : leaves) {
    if (!p.requires_grad() || !p.is_leaf()) throw ContractError("grad_check: params must be leaves requiring grad");
    p.zero_grad();
  }
  backward(f());
  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : leaves) analytic.emplace_back(p.grad().begin(), p.grad().end());

  double worst = 0.0;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto values = leaves[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double up = f().item();
      values[i] = original - eps;
      const double down = f().item();
      values[i] = original;
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = analytic[k][i];
      if (!std::isfinite(numeric) || !std::isfinite(exact)) {
        throw NumericError("grad_check: non-finite gradient at parameter " + std::to_string(k) + "[" +
                           std::to_string(i) + "]");
      }
      worst = std::max(worst, std::abs(exact - numeric) / (std::abs(exact) + std::abs(numeric) + 1e-12));
    }
  }
  for (Tensor& p : leaves) p.zero_grad();
  return worst;
}

}  // namespace snncodec
