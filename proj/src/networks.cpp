#include "spoa/networks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "spoa/errors.hpp"

namespace spoa {

void NetworkConfig::validate() const {
  if (input_channels == 0) throw ValidationError("network: input_channels must be >= 1");
  if (feature_channels == 0) throw ValidationError("network: feature_channels must be >= 1");
  if (n_fe == 0) throw ValidationError("network: n_fe must be >= 1");
  if (n_tb == 0) throw ValidationError("network: n_tb must be >= 1");
  if (n_policy_blocks == 0) throw ValidationError("network: n_policy_blocks must be >= 1");
  if (kernel_size % 2 == 0) throw ValidationError("network: kernel_size must be odd");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ValidationError("network: lambda must lie in (0, 1]");
  if (!(leaky_slope >= 0.0)) throw ValidationError("network: leaky_slope must be >= 0");
}

namespace {

template <typename Set, typename Fn>
void for_each_kernel(Set& params, Partition part, Fn&& fn) {
  if (part != Partition::Policy) {
    for (auto& k : params.feature) fn(k.kernel);
    for (auto& k : params.actor) fn(k.kernel);
  }
  if (part != Partition::FeatureActor) {
    for (auto& k : params.policy) fn(k.kernel);
  }
}

}  // namespace

ParameterSet parameter_layout(const NetworkConfig& c) {
  c.validate();
  const std::size_t k = c.kernel_size;
  const std::size_t f = c.feature_channels;
  ParameterSet p;
  for (std::size_t i = 0; i < c.n_fe; ++i) {
    p.feature.push_back({"fe" + std::to_string(i), Kernel(k, k, i == 0 ? c.input_channels : f, f)});
  }
  for (std::size_t i = 0; i < c.n_rb; ++i) {
    p.actor.push_back({"rb" + std::to_string(i) + ".h0", Kernel(k, k, f, f)});
    p.actor.push_back({"rb" + std::to_string(i) + ".h1", Kernel(k, k, f, f)});
  }
  for (std::size_t i = 0; i < c.n_tb; ++i) {
    const bool last = i + 1 == c.n_tb;
    p.actor.push_back({"tb" + std::to_string(i), Kernel(k, k, f, last ? c.input_channels : f)});
  }
  for (std::size_t i = 0; i < c.n_policy_blocks; ++i) {
    p.policy.push_back({"policy" + std::to_string(i), Kernel(k, k, i == 0 ? c.input_channels : f, f)});
  }
  return p;
}

namespace {

void require_layout(const ParameterSet& params, const NetworkConfig& c) {
  if (params.feature.size() != c.n_fe || params.actor.size() != 2 * c.n_rb + c.n_tb ||
      params.policy.size() != c.n_policy_blocks) {
    throw ValidationError("parameter set does not match network configuration");
  }
}

void set_delta(Kernel& kernel, std::size_t channels) {
  const std::size_t cy = kernel.kh / 2, cx = kernel.kw / 2;
  for (std::size_t ch = 0; ch < channels; ++ch) kernel.w(cy, cx, ch, ch) = 1.0;
}

}  // namespace

std::size_t ParameterSet::count(Partition p) const {
  std::size_t n = 0;
  for_each_kernel(*this, p, [&](const Kernel& k) { n += k.weights.size() + k.bias.size(); });
  if (p != Partition::FeatureActor) n += 1;
  return n;
}

std::vector<double> ParameterSet::flatten(Partition p) const {
  std::vector<double> out;
  out.reserve(count(p));
  for_each_kernel(*this, p, [&](const Kernel& k) {
    out.insert(out.end(), k.weights.begin(), k.weights.end());
    out.insert(out.end(), k.bias.begin(), k.bias.end());
  });
  if (p != Partition::FeatureActor) out.push_back(policy_bias);
  return out;
}

void ParameterSet::assign(Partition p, std::span<const double> values) {
  if (values.size() != count(p)) throw ValidationError("ParameterSet::assign: layout mismatch");
  std::size_t pos = 0;
  for_each_kernel(*this, p, [&](Kernel& k) {
    for (auto& w : k.weights) w = values[pos++];
    for (auto& b : k.bias) b = values[pos++];
  });
  if (p != Partition::FeatureActor) policy_bias = values[pos++];
}

ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet z = params;
  for_each_kernel(z, Partition::All, [](Kernel& k) {
    std::fill(k.weights.begin(), k.weights.end(), 0.0);
    std::fill(k.bias.begin(), k.bias.end(), 0.0);
  });
  z.policy_bias = 0.0;
  return z;
}

void accumulate(ParameterSet& into, const ParameterSet& other) {
  std::vector<NamedKernel>* dst[3] = {&into.feature, &into.actor, &into.policy};
  const std::vector<NamedKernel>* src[3] = {&other.feature, &other.actor, &other.policy};
  for (int p = 0; p < 3; ++p) {
    if (dst[p]->size() != src[p]->size()) throw ValidationError("accumulate: layout mismatch");
    for (std::size_t i = 0; i < dst[p]->size(); ++i) {
      Kernel& a = (*dst[p])[i].kernel;
      const Kernel& b = (*src[p])[i].kernel;
      if (a.weights.size() != b.weights.size() || a.bias.size() != b.bias.size()) {
        throw ValidationError("accumulate: layout mismatch");
      }
      for (std::size_t j = 0; j < a.weights.size(); ++j) a.weights[j] += b.weights[j];
      for (std::size_t j = 0; j < a.bias.size(); ++j) a.bias[j] += b.bias[j];
    }
  }
  into.policy_bias += other.policy_bias;
}

void scale(ParameterSet& params, double factor) {
  for_each_kernel(params, Partition::All, [&](Kernel& k) {
    for (auto& w : k.weights) w *= factor;
    for (auto& b : k.bias) b *= factor;
  });
  params.policy_bias *= factor;
}

ParameterSet init_parameters(const NetworkConfig& config, std::uint64_t seed) {
  ParameterSet p = parameter_layout(config);
  std::mt19937_64 rng(seed);
  for_each_kernel(p, Partition::All, [&](Kernel& k) {
    const double fan_in = static_cast<double>(k.kh * k.kw * k.in_channels);
    const double fan_out = static_cast<double>(k.kh * k.kw * k.out_channels);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& w : k.weights) w = dist(rng);
  });
  return p;
}

ParameterSet identity_parameters(const NetworkConfig& config) {
  if (config.feature_channels < config.input_channels) {
    throw ValidationError("identity_parameters: feature_channels must be >= input_channels");
  }
  ParameterSet p = parameter_layout(config);
  for (auto& k : p.feature) set_delta(k.kernel, config.input_channels);
  for (std::size_t i = 0; i < config.n_tb; ++i) set_delta(p.actor[2 * config.n_rb + i].kernel, config.input_channels);
  return p;
}

Tape::Node feature_extract(Tape& tape, Tape::Node s, const ParameterSet& params, const NetworkConfig& config,
                           ParameterSet* grads) {
  Tape::Node x = s;
  for (std::size_t i = 0; i < params.feature.size(); ++i) {
    x = tape.conv2d(x, params.feature[i].kernel, grads ? &grads->feature[i].kernel : nullptr);
    x = tape.leaky_relu(x, config.leaky_slope);
  }
  return x;
}

Tape::Node residual_block(Tape& tape, Tape::Node x, const Kernel& first, const Kernel& second, double lambda,
                          Kernel* first_grad, Kernel* second_grad) {
  Tape::Node h = tape.conv2d(x, first, first_grad);
  h = tape.leaky_relu(h, 0.0);
  h = tape.conv2d(h, second, second_grad);
  return tape.add_scaled(x, h, lambda);
}

ActorTrace actor_forward(const Tensor& s, const ParameterSet& params, const NetworkConfig& config,
                         ParameterSet* grads) {
  require_layout(params, config);
  if (s.channels() != config.input_channels) {
    throw ValidationError("actor_forward: state has " + std::to_string(s.channels()) + " channels, expected " +
                          std::to_string(config.input_channels));
  }
  ActorTrace trace;
  Tape& tape = trace.tape;
  trace.input = tape.input(s);
  Tape::Node x = feature_extract(tape, trace.input, params, config, grads);
  trace.latents.push_back(x);
  for (std::size_t n = 0; n < config.n_rb; ++n) {
    const std::size_t a = 2 * n, b = 2 * n + 1;
    x = residual_block(tape, x, params.actor[a].kernel, params.actor[b].kernel, config.lambda,
                       grads ? &grads->actor[a].kernel : nullptr, grads ? &grads->actor[b].kernel : nullptr);
    trace.latents.push_back(x);
  }
  for (std::size_t i = 0; i < config.n_tb; ++i) {
    const std::size_t idx = 2 * config.n_rb + i;
    x = tape.conv2d(x, params.actor[idx].kernel, grads ? &grads->actor[idx].kernel : nullptr);
    // The last transition block stays linear so the arrived state is unconstrained.
    if (i + 1 < config.n_tb) x = tape.leaky_relu(x, config.leaky_slope);
  }
  trace.arrived = x;
  return trace;
}

PolicyTrace policy_forward(const Tensor& s_hat, const Tensor& s_star, const ParameterSet& params,
                           const NetworkConfig& config, ParameterSet* grads) {
  require_layout(params, config);
  require_same_shape(s_hat, s_star, "policy_forward");
  PolicyTrace trace;
  Tape& tape = trace.tape;
  auto branch = [&](const Tensor& s) {
    Tape::Node x = tape.input(s);
    for (std::size_t i = 0; i < params.policy.size(); ++i) {
      x = tape.conv2d(x, params.policy[i].kernel, grads ? &grads->policy[i].kernel : nullptr);
      x = tape.leaky_relu(x, config.leaky_slope);
    }
    return x;
  };
  const Tape::Node arrived = branch(s_hat);
  const Tape::Node goal = branch(s_star);
  const Tape::Node corr = tape.inner_product(arrived, goal);
  trace.score = tape.add_bias(corr, params.policy_bias, grads ? &grads->policy_bias : nullptr);
  trace.log_pi = tape.log_sigmoid(trace.score);
  return trace;
}

Tensor feature_extract(const Tensor& s, const ParameterSet& params, const NetworkConfig& config) {
  if (params.feature.empty() || s.channels() != params.feature.front().kernel.in_channels) {
    throw ValidationError("feature_extract: channel mismatch");
  }
  Tape tape;
  const auto out = feature_extract(tape, tape.input(s), params, config, nullptr);
  return tape.value(out);
}

Tensor residual_block(const Tensor& x, const Kernel& first, const Kernel& second, double lambda) {
  Tape tape;
  const auto out = residual_block(tape, tape.input(x), first, second, lambda, nullptr, nullptr);
  return tape.value(out);
}

double siamese_score(const Tensor& s_hat, const Tensor& s_star, const ParameterSet& params,
                     const NetworkConfig& config) {
  return policy_forward(s_hat, s_star, params, config).score_value();
}

double policy_prob(const Tensor& s_hat, const Tensor& s_star, const ParameterSet& params,
                   const NetworkConfig& config) {
  return sigmoid(siamese_score(s_hat, s_star, params, config));
}

}  // namespace spoa
