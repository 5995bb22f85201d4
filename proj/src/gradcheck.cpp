#include "spoa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "spoa/networks.hpp"
#include "spoa/rl.hpp"

namespace spoa {

namespace {

constexpr std::size_t kSide = 8;

NetworkConfig tiny_network() {
  NetworkConfig cfg;
  cfg.input_channels = 1;
  cfg.n_fe = 2;
  cfg.n_rb = 2;
  cfg.n_tb = 2;
  cfg.n_policy_blocks = 2;
  cfg.feature_channels = 4;
  return cfg;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Kernel random_kernel(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Kernel k(3, 3, in, out);
  for (auto& v : k.weights) v = u(rng);
  for (auto& v : k.bias) v = u(rng);
  return k;
}

// Xavier kernels plus random biases so every bias coordinate matters.
ParameterSet random_parameters(const NetworkConfig& cfg, std::mt19937_64& rng) {
  ParameterSet p = init_parameters(cfg, rng());
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto* group : {&p.feature, &p.actor, &p.policy})
    for (auto& nk : *group)
      for (auto& b : nk.kernel.bias) b = u(rng);
  p.policy_bias = u(rng);
  return p;
}

ReplayBuffer random_buffer(std::size_t n, std::mt19937_64& rng) {
  ReplayBuffer buffer(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Shape s{kSide, kSide, 1};
    buffer.add({random_tensor(s, rng, 0.0, 1.0), random_tensor(s, rng, 0.0, 1.0), i});
  }
  return buffer;
}

void append(std::vector<bool>& into, const std::vector<bool>& more) { into.insert(into.end(), more.begin(), more.end()); }

void apply_fault(std::vector<double>& analytic, GradcheckFault fault) {
  if (fault == GradcheckFault::SignFlip)
    for (auto& v : analytic) v = -v;
}

SuiteResult finish(std::string name, double tolerance, const std::vector<FdComparison>& parts) {
  SuiteResult r;
  r.name = std::move(name);
  r.tolerance = tolerance;
  for (const auto& p : parts) {
    r.max_rel_error = std::max(r.max_rel_error, p.max_rel_error);
    r.checked += p.checked;
    r.skipped += p.skipped;
  }
  r.passed = r.checked > 0 && r.max_rel_error < tolerance;
  return r;
}

// Six-layer composite over every primitive: conv, leaky, conv, residual add,
// leaky, conv, inner product, bias, then log_sigmoid + sigmoid.
struct Composite {
  Tensor x, y;
  Kernel k1, k2, k3;
  double bias = 0.0;

  std::vector<double> flatten() const {
    std::vector<double> v(x.data().begin(), x.data().end());
    v.insert(v.end(), y.data().begin(), y.data().end());
    for (const Kernel* k : {&k1, &k2, &k3}) {
      v.insert(v.end(), k->weights.begin(), k->weights.end());
      v.insert(v.end(), k->bias.begin(), k->bias.end());
    }
    v.push_back(bias);
    return v;
  }

  void assign(std::span<const double> v) {
    std::size_t i = 0;
    for (auto& e : x.data()) e = v[i++];
    for (auto& e : y.data()) e = v[i++];
    for (Kernel* k : {&k1, &k2, &k3}) {
      for (auto& e : k->weights) e = v[i++];
      for (auto& e : k->bias) e = v[i++];
    }
    bias = v[i];
  }

  // Records the composite; sinks may be null.
  Tape::Node record(Tape& tape, Kernel* g1, Kernel* g2, Kernel* g3, double* gb, Tape::Node* xn,
                    Tape::Node* yn) const {
    const bool want = g1 != nullptr;
    *xn = tape.input(x, want);
    *yn = tape.input(y, want);
    const auto h1 = tape.leaky_relu(tape.conv2d(*xn, k1, g1), 0.1);
    const auto h2 = tape.conv2d(h1, k2, g2);
    const auto h3 = tape.leaky_relu(tape.add_scaled(h1, h2, 0.3), 0.2);
    const auto h4 = tape.conv2d(h3, k3, g3);
    const auto score = tape.add_bias(tape.inner_product(h4, *yn), bias, gb);
    return tape.add_scaled(tape.log_sigmoid(score), tape.sigmoid(score), 1.0);
  }
};

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

FdComparison compare_with_finite_differences(const std::vector<double>& point, std::span<const double> analytic,
                                             const Objective& f, double step, double fd_scale) {
  FdComparison out;
  const auto base_pattern = f(point).pattern;
  std::vector<double> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    bool settled = false;
    double numeric = 0.0;
    for (double h : {step, step * 1e-1, step * 1e-2}) {
      // Fourth-order five-point stencil; every probe must stay on the base activation pattern.
      double at[4];
      bool same = true;
      const double offsets[4] = {-2.0 * h, -h, h, 2.0 * h};
      for (int k = 0; k < 4 && same; ++k) {
        probe[i] = point[i] + offsets[k];
        const Probe q = f(probe);
        same = q.pattern == base_pattern;
        at[k] = q.value;
      }
      probe[i] = point[i];
      if (!same) continue;
      numeric = fd_scale * (8.0 * (at[2] - at[1]) - (at[3] - at[0])) / (12.0 * h);
      settled = true;
      break;
    }
    if (!settled) {
      ++out.skipped;
      continue;
    }
    out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic[i], numeric));
    ++out.checked;
  }
  return out;
}

SuiteResult check_primitives(const GradcheckOptions& options) {
  std::mt19937_64 rng(options.seed ^ 0x9a11ULL);
  std::vector<FdComparison> parts;
  for (std::size_t inst = 0; inst < options.instances; ++inst) {
    Composite c;
    c.x = random_tensor({kSide, kSide, 3}, rng, -1.0, 1.0);
    c.y = random_tensor({kSide, kSide, 2}, rng, -1.0, 1.0);
    c.k1 = random_kernel(3, 4, rng);
    c.k2 = random_kernel(4, 4, rng);
    c.k3 = random_kernel(4, 2, rng);
    c.bias = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);

    Composite g = c;
    for (Kernel* k : {&g.k1, &g.k2, &g.k3}) {
      std::fill(k->weights.begin(), k->weights.end(), 0.0);
      std::fill(k->bias.begin(), k->bias.end(), 0.0);
    }
    g.bias = 0.0;
    Tape tape;
    Tape::Node xn = 0, yn = 0;
    const auto out = c.record(tape, &g.k1, &g.k2, &g.k3, &g.bias, &xn, &yn);
    tape.backward(out);
    g.x = tape.grad(xn);
    g.y = tape.grad(yn);
    auto analytic = g.flatten();
    apply_fault(analytic, options.fault);

    Composite work = c;
    const Objective f = [&](std::span<const double> v) {
      work.assign(v);
      Tape t;
      Tape::Node a = 0, b = 0;
      const auto o = work.record(t, nullptr, nullptr, nullptr, nullptr, &a, &b);
      return Probe{t.scalar(o), t.activation_pattern()};
    };
    parts.push_back(compare_with_finite_differences(c.flatten(), analytic, f));
  }
  return finish("primitives", options.tolerance, parts);
}

SuiteResult check_actor_gradient(const GradcheckOptions& options) {
  std::mt19937_64 rng(options.seed ^ 0xac70ULL);
  const NetworkConfig cfg = tiny_network();
  std::vector<FdComparison> parts;
  for (std::size_t inst = 0; inst < options.instances; ++inst) {
    const ParameterSet params = random_parameters(cfg, rng);
    const ReplayBuffer buffer = random_buffer(2, rng);
    auto analytic = actor_gradient(buffer, params, cfg, 1).flatten(Partition::FeatureActor);
    apply_fault(analytic, options.fault);

    ParameterSet work = params;
    const Objective f = [&](std::span<const double> v) {
      work.assign(Partition::FeatureActor, v);
      Probe p;
      for (const auto& item : buffer.items()) {
        const ActorTrace trace = actor_forward(item.s0, work, cfg);
        p.value += 0.5 * reward(trace.arrived_state(), item.s_star) / static_cast<double>(buffer.size());
        append(p.pattern, trace.tape.activation_pattern());
      }
      return p;
    };
    parts.push_back(compare_with_finite_differences(params.flatten(Partition::FeatureActor), analytic, f));
  }
  return finish("actor", options.tolerance, parts);
}

SuiteResult check_policy_gradient(const GradcheckOptions& options) {
  std::mt19937_64 rng(options.seed ^ 0x9011ULL);
  const NetworkConfig cfg = tiny_network();
  std::vector<FdComparison> parts;
  for (std::size_t inst = 0; inst < options.instances; ++inst) {
    const ParameterSet params = random_parameters(cfg, rng);
    const ReplayBuffer buffer = random_buffer(2, rng);
    auto analytic = policy_gradient(buffer, params, cfg, 1).flatten(Partition::Policy);
    apply_fault(analytic, options.fault);

    // The reward depends only on the frozen actor.
    std::vector<Tensor> arrived;
    std::vector<double> rewards;
    for (const auto& item : buffer.items()) {
      arrived.push_back(actor_forward(item.s0, params, cfg).arrived_state());
      rewards.push_back(reward(arrived.back(), item.s_star));
    }
    ParameterSet work = params;
    const Objective f = [&](std::span<const double> v) {
      work.assign(Partition::Policy, v);
      Probe p;
      for (std::size_t k = 0; k < buffer.size(); ++k) {
        const PolicyTrace trace = policy_forward(arrived[k], buffer.items()[k].s_star, work, cfg);
        p.value += rewards[k] * trace.tape.scalar(trace.log_pi) / static_cast<double>(buffer.size());
        append(p.pattern, trace.tape.activation_pattern());
      }
      return p;
    };
    parts.push_back(compare_with_finite_differences(params.flatten(Partition::Policy), analytic, f));
  }
  return finish("policy", options.tolerance, parts);
}

SuiteResult check_combined_identity(const GradcheckOptions& options) {
  std::mt19937_64 rng(options.seed ^ 0x1de7ULL);
  const NetworkConfig cfg = tiny_network();
  SuiteResult r;
  r.name = "combined-identity";
  r.tolerance = options.identity_tolerance;
  for (std::size_t inst = 0; inst < options.identity_instances; ++inst) {
    const ParameterSet params = random_parameters(cfg, rng);
    const ReplayBuffer buffer = random_buffer(3, rng);
    auto fused = combined_gradient(buffer, params, cfg, 1).flatten(Partition::All);
    apply_fault(fused, options.fault);
    auto separate = actor_gradient(buffer, params, cfg, 1).flatten(Partition::FeatureActor);
    const auto pol = policy_gradient(buffer, params, cfg, 1).flatten(Partition::Policy);
    separate.insert(separate.end(), pol.begin(), pol.end());
    for (std::size_t i = 0; i < fused.size(); ++i) {
      r.max_rel_error =
          std::max(r.max_rel_error, relative_error(fused[i], separate[i], std::numeric_limits<double>::min()));
      ++r.checked;
    }
  }
  r.passed = r.checked > 0 && r.max_rel_error < r.tolerance;
  return r;
}

std::vector<SuiteResult> run_gradcheck(const GradcheckOptions& options) {
  return {check_primitives(options), check_actor_gradient(options), check_policy_gradient(options),
          check_combined_identity(options)};
}

}  // namespace spoa
