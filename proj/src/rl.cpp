#include "spoa/rl.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>

#include "spoa/dataset.hpp"
#include "spoa/errors.hpp"
#include "spoa/parallel.hpp"

namespace spoa {

void TrainConfig::validate() const {
  if (buffer_size == 0) throw ValidationError("train: buffer_size must be >= 1");
  if (actor_steps == 0 || policy_steps == 0 || spoa_steps == 0) {
    throw ValidationError("train: actor_steps, policy_steps and spoa_steps must be >= 1");
  }
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ValidationError("train: alpha and beta must be positive");
  if (!(epsilon_ball > 0.0)) throw ValidationError("train: epsilon_ball must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("train: gamma must lie in (0, 1)");
  if (!(warmup_alpha > 0.0)) throw ValidationError("train: warmup_alpha must be positive");
}

double reward(const Tensor& s_hat, const Tensor& s_star) { return -mean_squared_error(s_hat, s_star); }

bool within_epsilon(const Tensor& s_hat, const Tensor& s_star, double eps) {
  if (!(eps > 0.0)) throw ValidationError("within_epsilon: eps must be positive");
  return mean_squared_error(s_hat, s_star) < eps * eps;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("replay buffer capacity must be >= 1");
  items_.reserve(capacity);
}

void ReplayBuffer::add(StatePair pair) {
  if (full()) throw ValidationError("replay buffer is full");
  require_same_shape(pair.s0, pair.s_star, "replay buffer pair");
  items_.push_back(std::move(pair));
}

void ReplayBuffer::refill(std::span<const StatePair> dataset, std::mt19937_64& rng, bool augment_pairs) {
  if (dataset.empty()) throw ValidationError("cannot fill replay buffer from an empty dataset");
  clear();
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  while (!full()) {
    const StatePair& src = dataset[pick(rng)];
    if (!augment_pairs) {
      add(src);
      continue;
    }
    // Flips and quarter turns commute with the bicubic degradation, so
    // transforming both states matches transforming the HR patch first.
    const Augmentation choice = pick_augmentation(src.s_star, rng);
    add(StatePair{augment(src.s0, choice), augment(src.s_star, choice), src.id});
  }
}

TrainingState initial_state(const NetworkConfig& net, std::uint64_t seed) {
  TrainingState state;
  state.params = init_parameters(net, seed);
  state.actor_adam = AdamState(state.params.count(Partition::FeatureActor));
  state.policy_adam = AdamState(state.params.count(Partition::Policy));
  return state;
}

namespace {

template <typename PerItem>
ParameterSet buffer_average(const ReplayBuffer& buffer, const ParameterSet& params, std::size_t threads,
                            PerItem&& per_item) {
  if (buffer.empty()) throw ValidationError("update requires a non-empty replay buffer");
  const auto& items = buffer.items();
  std::vector<ParameterSet> parts(items.size());
  parallel_for(items.size(), threads, [&](std::size_t i) { parts[i] = per_item(items[i]); });
  ParameterSet total = zeros_like(params);
  for (const auto& part : parts) accumulate(total, part);
  scale(total, 1.0 / static_cast<double>(items.size()));
  check_finite(total.flatten(Partition::All), "gradient");
  return total;
}

// Adds the actor-term gradient of one pair into `grads`; returns the arrived state.
Tensor accumulate_actor_term(const StatePair& pair, const ParameterSet& params, const NetworkConfig& net,
                             ParameterSet& grads) {
  ActorTrace trace = actor_forward(pair.s0, params, net, &grads);
  const Tensor& s_hat = trace.arrived_state();
  Tensor seed = subtract(pair.s_star, s_hat);
  const double inv_n = 1.0 / static_cast<double>(seed.size());
  for (auto& v : seed.data()) v *= inv_n;
  trace.tape.backward(trace.arrived, seed);
  return s_hat;
}

// R * grad log pi for one pair with a given arrived state.
ParameterSet policy_term(const Tensor& s_hat, const StatePair& pair, const ParameterSet& params,
                         const NetworkConfig& net) {
  const double r = reward(s_hat, pair.s_star);
  ParameterSet grads = zeros_like(params);
  PolicyTrace trace = policy_forward(s_hat, pair.s_star, params, net, &grads);
  trace.tape.backward(trace.log_pi);
  scale(grads, r);
  return grads;
}

void apply_ascent(ParameterSet& params, Partition part, const ParameterSet& delta, AdamState& adam, double lr) {
  std::vector<double> values = params.flatten(part);
  std::vector<double> descent = delta.flatten(part);
  for (auto& g : descent) g = -g;
  adam_step(values, descent, adam, lr);
  params.assign(part, values);
}

std::mt19937_64 episode_rng(std::uint64_t seed, std::uint64_t episode) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(episode), static_cast<std::uint32_t>(episode >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

ParameterSet actor_gradient(const ReplayBuffer& buffer, const ParameterSet& params, const NetworkConfig& net,
                            std::size_t threads) {
  return buffer_average(buffer, params, threads, [&](const StatePair& pair) {
    ParameterSet grads = zeros_like(params);
    accumulate_actor_term(pair, params, net, grads);
    return grads;
  });
}

ParameterSet policy_gradient(const ReplayBuffer& buffer, const ParameterSet& params, const NetworkConfig& net,
                             std::size_t threads) {
  return buffer_average(buffer, params, threads, [&](const StatePair& pair) {
    const Tensor s_hat = actor_forward(pair.s0, params, net).arrived_state();
    return policy_term(s_hat, pair, params, net);
  });
}

ParameterSet combined_gradient(const ReplayBuffer& buffer, const ParameterSet& params, const NetworkConfig& net,
                               std::size_t threads) {
  return buffer_average(buffer, params, threads, [&](const StatePair& pair) {
    ParameterSet grads = zeros_like(params);
    const Tensor s_hat = accumulate_actor_term(pair, params, net, grads);
    accumulate(grads, policy_term(s_hat, pair, params, net));
    return grads;
  });
}

ParameterSet actor_update(const ReplayBuffer& buffer, TrainingState& state, const NetworkConfig& net, double alpha,
                          std::size_t threads) {
  ParameterSet delta = actor_gradient(buffer, state.params, net, threads);
  apply_ascent(state.params, Partition::FeatureActor, delta, state.actor_adam, alpha);
  return delta;
}

ParameterSet policy_update(const ReplayBuffer& buffer, TrainingState& state, const NetworkConfig& net, double beta,
                           std::size_t threads) {
  ParameterSet delta = policy_gradient(buffer, state.params, net, threads);
  apply_ascent(state.params, Partition::Policy, delta, state.policy_adam, beta);
  return delta;
}

ParameterSet spoa_update(const ReplayBuffer& buffer, TrainingState& state, const NetworkConfig& net, double alpha,
                         double beta, std::size_t threads) {
  ParameterSet delta = combined_gradient(buffer, state.params, net, threads);
  apply_ascent(state.params, Partition::FeatureActor, delta, state.actor_adam, alpha);
  apply_ascent(state.params, Partition::Policy, delta, state.policy_adam, beta);
  return delta;
}

BufferStats evaluate_buffer(const ReplayBuffer& buffer, const ParameterSet& params, const NetworkConfig& net,
                            double epsilon_ball, std::size_t threads) {
  if (buffer.empty()) throw ValidationError("evaluate_buffer: empty buffer");
  const auto& items = buffer.items();
  std::vector<double> rewards(items.size()), pis(items.size());
  std::vector<char> hits(items.size());
  parallel_for(items.size(), threads, [&](std::size_t i) {
    const Tensor s_hat = actor_forward(items[i].s0, params, net).arrived_state();
    rewards[i] = reward(s_hat, items[i].s_star);
    hits[i] = within_epsilon(s_hat, items[i].s_star, epsilon_ball) ? 1 : 0;
    pis[i] = policy_prob(s_hat, items[i].s_star, params, net);
  });
  BufferStats stats;
  for (std::size_t i = 0; i < items.size(); ++i) {
    stats.mean_reward += rewards[i];
    stats.mean_pi += pis[i];
    stats.success_count += static_cast<std::size_t>(hits[i]);
  }
  stats.mean_reward /= static_cast<double>(items.size());
  stats.mean_pi /= static_cast<double>(items.size());
  return stats;
}

EpisodeRecord run_episode(std::span<const StatePair> dataset, TrainingState& state, const NetworkConfig& net,
                          const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw ValidationError("run_episode: empty dataset");
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t episode = state.episode + 1;

  auto rng = episode_rng(config.seed, episode);
  ReplayBuffer buffer(config.buffer_size);
  buffer.refill(dataset, rng, config.augment);

  for (std::size_t a = 0; a < config.actor_steps; ++a) actor_update(buffer, state, net, config.alpha, config.threads);
  for (std::size_t p = 0; p < config.policy_steps; ++p) policy_update(buffer, state, net, config.beta, config.threads);
  for (std::size_t s = 0; s < config.spoa_steps; ++s) {
    spoa_update(buffer, state, net, config.alpha, config.beta, config.threads);
  }

  const BufferStats stats = evaluate_buffer(buffer, state.params, net, config.epsilon_ball, config.threads);
  state.episode = episode;

  EpisodeRecord record;
  record.episode = static_cast<std::size_t>(episode);
  record.mean_reward = stats.mean_reward;
  record.windowed_reward = stats.mean_reward;
  record.mean_pi = stats.mean_pi;
  record.success_count = stats.success_count;
  if (config.record_timing) {
    record.duration = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return record;
}

void warm_up_actor(std::span<const StatePair> dataset, TrainingState& state, const NetworkConfig& net,
                   const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw ValidationError("warm_up_actor: empty dataset");
  // Episode indices start at 1, so stream 0 is free for the warm-up.
  auto rng = episode_rng(config.seed, 0);
  ReplayBuffer buffer(config.buffer_size), identity(config.buffer_size);
  for (std::size_t k = 0; k < config.warmup_steps; ++k) {
    buffer.refill(dataset, rng, config.augment);
    identity.clear();
    for (StatePair pair : buffer.items()) {
      pair.s_star = pair.s0;
      identity.add(std::move(pair));
    }
    const double rate =
        config.warmup_alpha * (1.0 - static_cast<double>(k) / static_cast<double>(config.warmup_steps));
    try {
      actor_update(identity, state, net, rate, config.threads);
    } catch (const NumericError& e) {
      throw NumericError("warm-up step " + std::to_string(k + 1) + ": " + e.what());
    }
  }
}

std::vector<EpisodeRecord> train(std::span<const StatePair> dataset, TrainingState& state, const NetworkConfig& net,
                                 const TrainConfig& config, const EpisodeCallback& on_episode) {
  config.validate();
  net.validate();
  std::vector<EpisodeRecord> records;
  if (state.episode == 0 && config.episodes > 0 && config.warmup_steps > 0) warm_up_actor(dataset, state, net, config);
  while (state.episode < config.episodes) {
    EpisodeRecord record;
    try {
      record = run_episode(dataset, state, net, config);
    } catch (const NumericError& e) {
      throw NumericError("episode " + std::to_string(state.episode + 1) + ": " + e.what());
    }
    records.push_back(record);
    if (on_episode) on_episode(record, state);
  }
  fill_windowed_rewards(records);
  return records;
}

void fill_windowed_rewards(std::vector<EpisodeRecord>& records, std::size_t window) {
  if (window == 0) throw ValidationError("window must be >= 1");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t end = std::min(records.size(), i + window);
    double sum = 0.0;
    for (std::size_t j = i; j < end; ++j) sum += records[j].mean_reward;
    records[i].windowed_reward = sum / static_cast<double>(end - i);
  }
}

std::string training_log_csv(const std::vector<EpisodeRecord>& records) {
  std::string out = "episode,mean_reward,windowed_reward,mean_pi,success_count,duration_s\n";
  char line[256];
  for (const auto& r : records) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%zu,%.6f\n", r.episode, r.mean_reward, r.windowed_reward,
                  r.mean_pi, r.success_count, r.duration);
    out += line;
  }
  return out;
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpisodeRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << training_log_csv(records);
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<EpisodeRecord> read_training_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open training log " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "episode,mean_reward,windowed_reward,mean_pi,success_count,duration_s") {
    throw ValidationError(path.string() + ": missing training log header");
  }
  std::vector<EpisodeRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpisodeRecord r;
    int used = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%zu,%lf%n", &r.episode, &r.mean_reward, &r.windowed_reward,
                    &r.mean_pi, &r.success_count, &r.duration, &used) != 6 ||
        static_cast<std::size_t>(used) != line.size()) {
      throw ValidationError(path.string() + ": malformed training log row '" + line + "'");
    }
    records.push_back(r);
  }
  return records;
}

// ---- checkpoints -------------------------------------------------------------

namespace {

template <typename Values>
NamedArray vector_record(std::string name, const Values& values) {
  return {std::move(name),
          {static_cast<std::uint32_t>(values.size()), 1, 1, 1},
          std::vector<double>(values.begin(), values.end())};
}

NamedArray scalar_record(std::string name, double value) { return {std::move(name), {1, 1, 1, 1}, {value}}; }

template <typename Fn>
void for_each_named(const ParameterSet& params, Fn&& fn) {
  for (const auto& k : params.feature) fn("feature/" + k.name, k.kernel);
  for (const auto& k : params.actor) fn("actor/" + k.name, k.kernel);
  for (const auto& k : params.policy) fn("policy/" + k.name, k.kernel);
}

template <typename Fn>
void for_each_named(ParameterSet& params, Fn&& fn) {
  for (auto& k : params.feature) fn("feature/" + k.name, k.kernel);
  for (auto& k : params.actor) fn("actor/" + k.name, k.kernel);
  for (auto& k : params.policy) fn("policy/" + k.name, k.kernel);
}

}  // namespace

std::vector<NamedArray> to_records(const TrainingState& state) {
  std::vector<NamedArray> records;
  for_each_named(state.params, [&](const std::string& name, const Kernel& k) {
    records.push_back({name + "/weights",
                       {static_cast<std::uint32_t>(k.kh), static_cast<std::uint32_t>(k.kw),
                        static_cast<std::uint32_t>(k.in_channels), static_cast<std::uint32_t>(k.out_channels)},
                       std::vector<double>(k.weights.begin(), k.weights.end())});
    records.push_back(vector_record(name + "/bias", k.bias));
  });
  records.push_back(scalar_record("policy/b", state.params.policy_bias));
  const std::pair<const char*, const AdamState*> adams[] = {{"adam/actor", &state.actor_adam},
                                                            {"adam/policy", &state.policy_adam}};
  for (const auto& [prefix, adam] : adams) {
    records.push_back(vector_record(std::string(prefix) + "/m", adam->first_moment));
    records.push_back(vector_record(std::string(prefix) + "/v", adam->second_moment));
    records.push_back(scalar_record(std::string(prefix) + "/step", static_cast<double>(adam->step_count)));
  }
  records.push_back(scalar_record("train/episode", static_cast<double>(state.episode)));
  return records;
}

TrainingState from_records(const std::vector<NamedArray>& records, const NetworkConfig& net,
                           const std::string& source) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  auto find = [&](const std::string& name) -> const NamedArray* {
    auto it = by_name.find(name);
    return it == by_name.end() ? nullptr : it->second;
  };
  auto require = [&](const std::string& name, std::size_t expected) -> const NamedArray& {
    const NamedArray* r = find(name);
    if (r == nullptr) throw ValidationError(source + ": checkpoint lacks '" + name + "'");
    if (r->data.size() != expected) {
      throw ValidationError(source + ": '" + name + "' has " + std::to_string(r->data.size()) + " values, expected " +
                            std::to_string(expected) + " (network configuration mismatch?)");
    }
    return *r;
  };

  TrainingState state;
  state.params = parameter_layout(net);
  for_each_named(state.params, [&](const std::string& name, Kernel& k) {
    const NamedArray& w = require(name + "/weights", k.weights.size());
    if (w.dims[0] != k.kh || w.dims[1] != k.kw || w.dims[2] != k.in_channels || w.dims[3] != k.out_channels) {
      throw ValidationError(source + ": '" + name + "/weights' has mismatched dimensions");
    }
    k.weights.assign(w.data.begin(), w.data.end());
    const auto& b = require(name + "/bias", k.bias.size()).data;
    k.bias.assign(b.begin(), b.end());
  });
  state.params.policy_bias = require("policy/b", 1).data[0];
  check_finite(state.params.flatten(Partition::All), source + " parameters");

  state.actor_adam = AdamState(state.params.count(Partition::FeatureActor));
  state.policy_adam = AdamState(state.params.count(Partition::Policy));
  const std::pair<const char*, AdamState*> adams[] = {{"adam/actor", &state.actor_adam},
                                                      {"adam/policy", &state.policy_adam}};
  for (const auto& [prefix, adam] : adams) {
    if (find(std::string(prefix) + "/m") == nullptr) continue;
    adam->first_moment = require(std::string(prefix) + "/m", adam->first_moment.size()).data;
    adam->second_moment = require(std::string(prefix) + "/v", adam->second_moment.size()).data;
    adam->step_count = static_cast<std::uint64_t>(require(std::string(prefix) + "/step", 1).data[0]);
  }
  if (const NamedArray* ep = find("train/episode")) state.episode = static_cast<std::uint64_t>(ep->data.at(0));
  return state;
}

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state) {
  write_container(path, to_records(state));
}

TrainingState load_checkpoint(const std::filesystem::path& path, const NetworkConfig& net) {
  return from_records(read_container(path), net, path.string());
}

}  // namespace spoa
