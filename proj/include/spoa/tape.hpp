#pragma once

#include <cstddef>
#include <vector>

#include "spoa/tensor.hpp"

namespace spoa {

/// Records a forward computation over the differentiable primitives and
/// replays it in reverse to obtain gradients.
///
/// Kernels and the scalar bias are referenced, not copied: they and any
/// gradient sinks must outlive the tape. Gradient sinks accumulate, so a
/// caller that wants a fresh gradient passes zeroed sinks.
class Tape {
 public:
  using Node = std::size_t;

  /// Adds a constant leaf. Leaves with `requires_grad` receive gradients.
  Node input(Tensor value, bool requires_grad = false);

  Node conv2d(Node x, const Kernel& kernel, Kernel* grad_sink);
  Node leaky_relu(Node x, double slope);
  Node add_scaled(Node x, Node h, double lambda);  // x + lambda * h

  // Scalar nodes are 1x1x1 tensors.
  Node inner_product(Node a, Node b);
  Node add_bias(Node scalar, const double& bias, double* grad_sink);
  Node sigmoid(Node scalar);
  Node log_sigmoid(Node scalar);

  const Tensor& value(Node n) const { return entries_.at(n).value; }
  double scalar(Node n) const;
  /// Gradient accumulated at `n` by the last backward pass (zeros if none reached it).
  const Tensor& grad(Node n) const { return entries_.at(n).grad; }
  std::size_t size() const { return entries_.size(); }

  /// Seeds `out` with `seed` and propagates to every node and sink upstream.
  void backward(Node out, const Tensor& seed);
  /// Scalar output, seed 1.
  void backward(Node out);

  /// Sign pattern of every activation input on the tape (x >= 0 per element).
  /// Finite-difference checks compare patterns to detect kink crossings.
  std::vector<bool> activation_pattern() const;

 private:
  enum class Op { Input, Conv, Leaky, AddScaled, Inner, AddBias, Sigmoid, LogSigmoid };

  struct Entry {
    Op op = Op::Input;
    Tensor value;
    Tensor grad;
    Node a = 0;
    Node b = 0;
    double param = 0.0;  // slope or lambda
    const Kernel* kernel = nullptr;
    Kernel* kernel_grad = nullptr;
    double* bias_grad = nullptr;
    bool needs_grad = false;
  };

  Node push(Entry e);
  bool has_sink(const Entry& e) const { return e.kernel_grad != nullptr || e.bias_grad != nullptr; }

  std::vector<Entry> entries_;
};

}  // namespace spoa
