#pragma once

// Dense float64 tensors with recorded operations and reverse-mode gradients.
//
// A Tensor is a shared handle to a node. Operations whose inputs require
// gradients record their parents and a backward closure; backward() walks
// that graph in reverse topological order and accumulates into leaf grads.
// One computation is single-threaded; independent graphs may be built on
// different threads.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace snncodec {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// In-place access for leaf parameters (optimizer updates, initialization).
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  /// Gradient buffer; zero-filled if backward has not reached this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, no history, no gradient requirement.
  Tensor detach() const;
  /// Independent copy of the values (and requires_grad flag) as a fresh leaf.
  Tensor clone() const;

  bool defined() const { return node_ != nullptr; }

  // Engine internals.
  explicit Tensor(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables history recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Backward semantics of the Heaviside spike.
struct SpikeBackward {
  enum class Mode { ExactZero, Surrogate, Relaxed };
  Mode mode = Mode::Surrogate;
  double alpha = 4.0;

  static SpikeBackward exact_zero() { return {Mode::ExactZero, 4.0}; }
  static SpikeBackward surrogate(double alpha = 4.0) { return {Mode::Surrogate, alpha}; }
  static SpikeBackward relaxed(double alpha = 4.0) { return {Mode::Relaxed, alpha}; }
};

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor sigmoid(const Tensor& a);

/// Scalar sum / mean of all elements.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// out[i,j] = sum_k x[i,k] * w[j,k] + b[j]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Cross-correlation of x[B,C,H,W] with k[O,C,kh,kw]; no bias.
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t pad);

/// Non-overlapping window x window average over the last two axes of x[B,C,H,W].
Tensor avg_pool2d(const Tensor& x, std::size_t window);

Tensor reshape(const Tensor& x, Shape shape);

/// Heaviside with Θ(0) = 1 (or σ(alpha·u) in Relaxed mode).
Tensor spike(const Tensor& u, const SpikeBackward& bw);

/// Mean over samples of -log softmax(logits)[label]; logits[B,K].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Broadcasts per-channel p[C] to `shape`, where shape[axis] == C.
Tensor expand_channels(const Tensor& p, const Shape& shape, std::size_t axis = 1);

/// x[index] along the leading axis.
Tensor select(const Tensor& x, std::size_t index);

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);

/// Mean over the leading axis.
Tensor mean_leading(const Tensor& x);

/// Soft-reset LIF recurrence over currents[T, B, C, ...], starting from rest:
///   h = leak[t,c]·v + gain[t,c]·I[t],  s = spike(h − v_th),  v = h − s·v_th
/// leak and gain are [T, C], or [T, 1] to share one value across channels.
/// Returns the spikes; backward runs through time in one pass.
Tensor lif_scan(const Tensor& currents, const Tensor& leak, const Tensor& gain, double v_th, const SpikeBackward& bw);

/// Populates leaf gradients of the scalar `loss`.
void backward(const Tensor& loss);

/// Max relative error between backward() and central differences over every
/// element of `params`. f must rebuild its graph on every call.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double eps = 1e-4);

}  // namespace snncodec
