#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spoa/tape.hpp"
#include "spoa/tensor.hpp"

namespace spoa {

struct NetworkConfig {
  std::size_t input_channels = 1;  // C
  std::size_t n_fe = 3;
  std::size_t n_rb = 3;  // N
  std::size_t n_tb = 3;  // m
  std::size_t n_policy_blocks = 3;
  std::size_t feature_channels = 32;  // C~
  std::size_t kernel_size = 3;
  double lambda = 0.1;
  double leaky_slope = 0.1;

  void validate() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct NamedKernel {
  std::string name;
  Kernel kernel;

  friend bool operator==(const NamedKernel&, const NamedKernel&) = default;
};

enum class Partition { FeatureActor, Policy, All };

/// Trainable parameters split into the feature extractor, the actor
/// (residual actions then transition blocks) and the shared Siamese policy
/// branch plus its scalar bias. The same type carries gradients.
struct ParameterSet {
  std::vector<NamedKernel> feature;
  std::vector<NamedKernel> actor;
  std::vector<NamedKernel> policy;
  double policy_bias = 0.0;

  std::size_t count(Partition p) const;
  std::vector<double> flatten(Partition p) const;
  void assign(Partition p, std::span<const double> values);

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

ParameterSet zeros_like(const ParameterSet& params);
void accumulate(ParameterSet& into, const ParameterSet& other);
void scale(ParameterSet& params, double factor);

/// All-zero parameters with the layout `config` describes.
ParameterSet parameter_layout(const NetworkConfig& config);

/// Xavier-uniform kernels, zero biases, deterministic per seed.
ParameterSet init_parameters(const NetworkConfig& config, std::uint64_t seed);

/// Parameters whose actor maps any state with values >= 0 to itself exactly:
/// delta kernels carry channel 0 through the extractor and transition
/// blocks, residual branches are zero. Policy kernels stay zero.
ParameterSet identity_parameters(const NetworkConfig& config);

// ---- forward builders on a tape -------------------------------------------
// `grads` may be null; otherwise it must be zeros_like(params) (or a
// partially accumulated gradient) and receives parameter gradients.

Tape::Node feature_extract(Tape& tape, Tape::Node s, const ParameterSet& params, const NetworkConfig& config,
                           ParameterSet* grads);
Tape::Node residual_block(Tape& tape, Tape::Node x, const Kernel& first, const Kernel& second, double lambda,
                          Kernel* first_grad, Kernel* second_grad);

/// Recorded actor pass: latents s~0..s~N and the arrived state.
struct ActorTrace {
  Tape tape;
  Tape::Node input = 0;
  std::vector<Tape::Node> latents;
  Tape::Node arrived = 0;

  const Tensor& arrived_state() const { return tape.value(arrived); }
  const Tensor& latent(std::size_t n) const { return tape.value(latents.at(n)); }
};

ActorTrace actor_forward(const Tensor& s, const ParameterSet& params, const NetworkConfig& config,
                         ParameterSet* grads = nullptr);

struct PolicyTrace {
  Tape tape;
  Tape::Node score = 0;  // Psi
  Tape::Node log_pi = 0;

  double score_value() const { return tape.scalar(score); }
  double pi() const { return sigmoid(score_value()); }
};

PolicyTrace policy_forward(const Tensor& s_hat, const Tensor& s_star, const ParameterSet& params,
                           const NetworkConfig& config, ParameterSet* grads = nullptr);

// ---- value-only conveniences ----------------------------------------------

Tensor feature_extract(const Tensor& s, const ParameterSet& params, const NetworkConfig& config);
Tensor residual_block(const Tensor& x, const Kernel& first, const Kernel& second, double lambda);
double siamese_score(const Tensor& s_hat, const Tensor& s_star, const ParameterSet& params,
                     const NetworkConfig& config);
double policy_prob(const Tensor& s_hat, const Tensor& s_star, const ParameterSet& params,
                   const NetworkConfig& config);

}  // namespace spoa
