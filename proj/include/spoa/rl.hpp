#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "spoa/adam.hpp"
#include "spoa/container.hpp"
#include "spoa/networks.hpp"
#include "spoa/state.hpp"

namespace spoa {

struct TrainConfig {
  std::size_t episodes = 2000;
  std::size_t buffer_size = 10;
  std::size_t actor_steps = 1;   // A
  std::size_t policy_steps = 1;  // P
  std::size_t spoa_steps = 1;    // S
  double alpha = 1e-4;
  double beta = 1e-7;
  double epsilon_ball = 0.02;
  double gamma = 0.99;  // kept for completeness; the terminal-reward updates never discount
  std::uint64_t seed = 0;
  bool augment = true;
  bool record_timing = false;
  std::size_t threads = 0;  // 0 = one per hardware thread
  // Actor-only steps toward the identity map (target s0) before episode 1,
  // with the rate decaying linearly from warmup_alpha to zero.
  std::size_t warmup_steps = 0;
  double warmup_alpha = 1e-3;

  void validate() const;
};

struct EpisodeRecord {
  std::size_t episode = 0;
  double mean_reward = 0.0;
  double windowed_reward = 0.0;
  double mean_pi = 0.0;
  std::size_t success_count = 0;
  double duration = 0.0;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

/// R = -mean((s_hat - s*)^2).
double reward(const Tensor& s_hat, const Tensor& s_star);
/// mean((s_hat - s*)^2) < eps^2.
bool within_epsilon(const Tensor& s_hat, const Tensor& s_star, double eps);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  bool full() const { return items_.size() == capacity_; }
  const std::vector<StatePair>& items() const { return items_; }

  void clear() { items_.clear(); }
  void add(StatePair pair);
  /// Empties the buffer and refills it with uniform draws (with replacement).
  void refill(std::span<const StatePair> dataset, std::mt19937_64& rng, bool augment);

 private:
  std::size_t capacity_;
  std::vector<StatePair> items_;
};

/// Everything that evolves during training.
struct TrainingState {
  ParameterSet params;
  AdamState actor_adam;   // over theta_fa, rate alpha
  AdamState policy_adam;  // over theta_p, rate beta
  std::uint64_t episode = 0;

  friend bool operator==(const TrainingState&, const TrainingState&) = default;
};

TrainingState initial_state(const NetworkConfig& net, std::uint64_t seed);

// ---- raw gradients on a frozen snapshot -------------------------------------
// All are ascent directions averaged over the buffer in index order.

/// Reward-ascent direction for theta_fa: backprop seeded with -(s_hat - s*)/n,
/// i.e. half the gradient of the mean reward. Policy partition is zero.
ParameterSet actor_gradient(const ReplayBuffer& buffer, const ParameterSet& params, const NetworkConfig& net,
                            std::size_t threads = 0);

/// R * grad_{theta_p} log pi with the actor frozen. Actor partition is zero.
ParameterSet policy_gradient(const ReplayBuffer& buffer, const ParameterSet& params, const NetworkConfig& net,
                             std::size_t threads = 0);

/// Both terms from one shared forward pass per buffer item.
ParameterSet combined_gradient(const ReplayBuffer& buffer, const ParameterSet& params, const NetworkConfig& net,
                               std::size_t threads = 0);

// ---- updates: compute on the current snapshot, then apply with Adam ---------
// Each returns the raw gradient it applied.

ParameterSet actor_update(const ReplayBuffer& buffer, TrainingState& state, const NetworkConfig& net, double alpha,
                          std::size_t threads = 0);
ParameterSet policy_update(const ReplayBuffer& buffer, TrainingState& state, const NetworkConfig& net, double beta,
                           std::size_t threads = 0);
ParameterSet spoa_update(const ReplayBuffer& buffer, TrainingState& state, const NetworkConfig& net, double alpha,
                         double beta, std::size_t threads = 0);

struct BufferStats {
  double mean_reward = 0.0;
  double mean_pi = 0.0;
  std::size_t success_count = 0;
};

BufferStats evaluate_buffer(const ReplayBuffer& buffer, const ParameterSet& params, const NetworkConfig& net,
                            double epsilon_ball, std::size_t threads = 0);

/// One pass of the episode loop: refill the buffer, then A actor updates,
/// P policy updates and S combined updates. Advances state.episode.
EpisodeRecord run_episode(std::span<const StatePair> dataset, TrainingState& state, const NetworkConfig& net,
                          const TrainConfig& config);

/// Runs config.warmup_steps actor updates on buffers whose goal is replaced by
/// s0, so the arrived state starts out close to the initial state.
void warm_up_actor(std::span<const StatePair> dataset, TrainingState& state, const NetworkConfig& net,
                   const TrainConfig& config);

using EpisodeCallback = std::function<void(const EpisodeRecord&, const TrainingState&)>;

/// Runs episodes state.episode+1 .. config.episodes, preceded by the actor
/// warm-up when starting from episode 0 with episodes to run. Windowed rewards are
/// filled once the run ends. NumericError messages carry the episode index.
std::vector<EpisodeRecord> train(std::span<const StatePair> dataset, TrainingState& state, const NetworkConfig& net,
                                 const TrainConfig& config, const EpisodeCallback& on_episode = {});

/// Forward window: entry i averages records i .. i+window-1 (truncated at the end).
void fill_windowed_rewards(std::vector<EpisodeRecord>& records, std::size_t window = 10);

std::string training_log_csv(const std::vector<EpisodeRecord>& records);
void write_training_log(const std::filesystem::path& path, const std::vector<EpisodeRecord>& records);
std::vector<EpisodeRecord> read_training_log(const std::filesystem::path& path);

// ---- checkpoints -------------------------------------------------------------

std::vector<NamedArray> to_records(const TrainingState& state);
/// Parameters are mandatory; missing optimizer records leave fresh Adam state.
TrainingState from_records(const std::vector<NamedArray>& records, const NetworkConfig& net,
                           const std::string& source = "<records>");

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state);
TrainingState load_checkpoint(const std::filesystem::path& path, const NetworkConfig& net);

}  // namespace spoa
