#include "spoa/tape.hpp"

#include <cmath>

#include "spoa/errors.hpp"

namespace spoa {

namespace {

Tensor scalar_tensor(double v) { return Tensor({1, 1, 1}, std::vector<double>{v}); }

void require_scalar(const Tensor& t, const char* what) {
  if (t.shape() != Shape{1, 1, 1}) throw ValidationError(std::string(what) + ": expected a scalar node");
}

}  // namespace

Tape::Node Tape::push(Entry e) {
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

Tape::Node Tape::input(Tensor value, bool requires_grad) {
  check_finite(value, "tape input");
  Entry e;
  e.op = Op::Input;
  e.value = std::move(value);
  e.needs_grad = requires_grad;
  return push(std::move(e));
}

Tape::Node Tape::conv2d(Node x, const Kernel& kernel, Kernel* grad_sink) {
  Entry e;
  e.op = Op::Conv;
  e.value = spoa::conv2d(value(x), kernel);
  e.a = x;
  e.kernel = &kernel;
  e.kernel_grad = grad_sink;
  e.needs_grad = entries_[x].needs_grad || grad_sink != nullptr;
  return push(std::move(e));
}

Tape::Node Tape::leaky_relu(Node x, double slope) {
  Entry e;
  e.op = Op::Leaky;
  e.value = spoa::leaky_relu(value(x), slope);
  e.a = x;
  e.param = slope;
  e.needs_grad = entries_[x].needs_grad;
  return push(std::move(e));
}

Tape::Node Tape::add_scaled(Node x, Node h, double lambda) {
  Entry e;
  e.op = Op::AddScaled;
  e.value = spoa::add_scaled(value(x), value(h), lambda);
  e.a = x;
  e.b = h;
  e.param = lambda;
  e.needs_grad = entries_[x].needs_grad || entries_[h].needs_grad;
  return push(std::move(e));
}

Tape::Node Tape::inner_product(Node a, Node b) {
  Entry e;
  e.op = Op::Inner;
  e.value = scalar_tensor(spoa::inner_product(value(a), value(b)));
  e.a = a;
  e.b = b;
  e.needs_grad = entries_[a].needs_grad || entries_[b].needs_grad;
  return push(std::move(e));
}

Tape::Node Tape::add_bias(Node s, const double& bias, double* grad_sink) {
  require_scalar(value(s), "add_bias");
  Entry e;
  e.op = Op::AddBias;
  e.value = scalar_tensor(scalar(s) + bias);
  check_finite(e.value, "add_bias output");
  e.a = s;
  e.bias_grad = grad_sink;
  e.needs_grad = entries_[s].needs_grad || grad_sink != nullptr;
  return push(std::move(e));
}

Tape::Node Tape::sigmoid(Node s) {
  require_scalar(value(s), "sigmoid");
  Entry e;
  e.op = Op::Sigmoid;
  e.value = scalar_tensor(spoa::sigmoid(scalar(s)));
  e.a = s;
  e.needs_grad = entries_[s].needs_grad;
  return push(std::move(e));
}

Tape::Node Tape::log_sigmoid(Node s) {
  require_scalar(value(s), "log_sigmoid");
  Entry e;
  e.op = Op::LogSigmoid;
  e.value = scalar_tensor(spoa::log_sigmoid(scalar(s)));
  check_finite(e.value, "log_sigmoid output");
  e.a = s;
  e.needs_grad = entries_[s].needs_grad;
  return push(std::move(e));
}

double Tape::scalar(Node n) const {
  const Tensor& v = value(n);
  require_scalar(v, "scalar");
  return v[0];
}

void Tape::backward(Node out) { backward(out, scalar_tensor(1.0)); }

void Tape::backward(Node out, const Tensor& seed) {
  if (out >= entries_.size()) throw ValidationError("backward: node not on tape");
  if (seed.shape() != entries_[out].value.shape()) {
    throw ValidationError("backward: seed shape " + to_string(seed.shape()) + " does not match node shape " +
                          to_string(entries_[out].value.shape()));
  }
  check_finite(seed, "backward seed");
  for (auto& e : entries_) e.grad = Tensor(e.value.shape());
  entries_[out].grad = seed;

  for (Node i = out + 1; i-- > 0;) {
    Entry& e = entries_[i];
    if (!e.needs_grad) continue;
    const Tensor& g = e.grad;
    switch (e.op) {
      case Op::Input:
        break;
      case Op::Conv: {
        Entry& src = entries_[e.a];
        spoa::conv2d_backward(src.value, *e.kernel, g, src.needs_grad ? &src.grad : nullptr, e.kernel_grad);
        break;
      }
      case Op::Leaky: {
        Entry& src = entries_[e.a];
        if (!src.needs_grad) break;
        auto x = src.value.data();
        auto dx = src.grad.data();
        for (std::size_t k = 0; k < x.size(); ++k) dx[k] += x[k] >= 0.0 ? g[k] : e.param * g[k];
        break;
      }
      case Op::AddScaled: {
        Entry& x = entries_[e.a];
        Entry& h = entries_[e.b];
        if (x.needs_grad) {
          for (std::size_t k = 0; k < g.size(); ++k) x.grad[k] += g[k];
        }
        if (h.needs_grad) {
          for (std::size_t k = 0; k < g.size(); ++k) h.grad[k] += e.param * g[k];
        }
        break;
      }
      case Op::Inner: {
        Entry& a = entries_[e.a];
        Entry& b = entries_[e.b];
        const double scale = g[0] / static_cast<double>(a.value.size());
        // a and b may be the same node; both contributions land on it.
        if (a.needs_grad) {
          for (std::size_t k = 0; k < a.value.size(); ++k) a.grad[k] += scale * b.value[k];
        }
        if (b.needs_grad) {
          for (std::size_t k = 0; k < b.value.size(); ++k) b.grad[k] += scale * a.value[k];
        }
        break;
      }
      case Op::AddBias: {
        if (e.bias_grad != nullptr) *e.bias_grad += g[0];
        Entry& src = entries_[e.a];
        if (src.needs_grad) src.grad[0] += g[0];
        break;
      }
      case Op::Sigmoid: {
        Entry& src = entries_[e.a];
        const double s = e.value[0];
        if (src.needs_grad) src.grad[0] += g[0] * s * (1.0 - s);
        break;
      }
      case Op::LogSigmoid: {
        // d/dx log(sigmoid(x)) = 1 - sigmoid(x) = sigmoid(-x)
        Entry& src = entries_[e.a];
        if (src.needs_grad) src.grad[0] += g[0] * spoa::sigmoid(-src.value[0]);
        break;
      }
    }
  }
}

std::vector<bool> Tape::activation_pattern() const {
  std::vector<bool> pattern;
  for (const auto& e : entries_) {
    if (e.op != Op::Leaky) continue;
    for (double v : entries_[e.a].value.data()) pattern.push_back(v >= 0.0);
  }
  return pattern;
}

}  // namespace spoa
