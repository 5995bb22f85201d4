#include "spoa/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "spoa/errors.hpp"

namespace spoa {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ValidationError("config: key '" + key + "' expects " + expected + ", got '" + value + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (value.empty() || ec != std::errc() || ptr != end) bad_value(key, value, expected);
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  return parse_number<std::size_t>(key, value, "a non-negative integer");
}

double parse_real(const std::string& key, const std::string& value) {
  return parse_number<double>(key, value, "a real number");
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

// Shortest text that parses back to the same double.
std::string format_real(double v) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

struct Entry {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class Field>
Entry count_entry(std::string name, std::string doc, Field field) {
  return {{name, std::move(doc)},
          [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = parse_count(name, v); }};
}

template <class Field>
Entry real_entry(std::string name, std::string doc, Field field) {
  return {{name, std::move(doc)}, [field](const RunConfig& c) { return format_real(field(const_cast<RunConfig&>(c))); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = parse_real(name, v); }};
}

template <class Field>
Entry bool_entry(std::string name, std::string doc, Field field) {
  return {{name, std::move(doc)},
          [field](const RunConfig& c) { return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = parse_bool(name, v); }};
}

template <class Field>
Entry path_entry(std::string name, std::string doc, Field field) {
  return {{name, std::move(doc)}, [field](const RunConfig& c) { return field(const_cast<RunConfig&>(c)).string(); },
          [field, name](RunConfig& c, const std::string& v) {
            if (v.empty()) bad_value(name, v, "a non-empty path");
            field(c) = v;
          }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(count_entry("input_channels", "image channels C", [](RunConfig& c) -> auto& { return c.network.input_channels; }));
    t.push_back(count_entry("feature_channels", "latent channels", [](RunConfig& c) -> auto& { return c.network.feature_channels; }));
    t.push_back(count_entry("n_fe", "feature extractor blocks", [](RunConfig& c) -> auto& { return c.network.n_fe; }));
    t.push_back(count_entry("n_rb", "residual action blocks", [](RunConfig& c) -> auto& { return c.network.n_rb; }));
    t.push_back(count_entry("n_tb", "transition blocks", [](RunConfig& c) -> auto& { return c.network.n_tb; }));
    t.push_back(count_entry("n_policy_blocks", "policy branch blocks", [](RunConfig& c) -> auto& { return c.network.n_policy_blocks; }));
    t.push_back(count_entry("kernel_size", "odd spatial kernel size", [](RunConfig& c) -> auto& { return c.network.kernel_size; }));
    t.push_back(real_entry("lambda", "residual branch scale", [](RunConfig& c) -> auto& { return c.network.lambda; }));
    t.push_back(real_entry("leaky_slope", "leaky ReLU negative slope", [](RunConfig& c) -> auto& { return c.network.leaky_slope; }));

    t.push_back(count_entry("episodes", "training episodes", [](RunConfig& c) -> auto& { return c.train.episodes; }));
    t.push_back(count_entry("buffer_size", "replay buffer capacity", [](RunConfig& c) -> auto& { return c.train.buffer_size; }));
    t.push_back(count_entry("actor_steps", "actor updates per episode", [](RunConfig& c) -> auto& { return c.train.actor_steps; }));
    t.push_back(count_entry("policy_steps", "policy updates per episode", [](RunConfig& c) -> auto& { return c.train.policy_steps; }));
    t.push_back(count_entry("spoa_steps", "combined updates per episode", [](RunConfig& c) -> auto& { return c.train.spoa_steps; }));
    t.push_back(real_entry("alpha", "actor step size", [](RunConfig& c) -> auto& { return c.train.alpha; }));
    t.push_back(real_entry("beta", "policy step size", [](RunConfig& c) -> auto& { return c.train.beta; }));
    t.push_back(real_entry("epsilon_ball", "success radius (RMSE)", [](RunConfig& c) -> auto& { return c.train.epsilon_ball; }));
    t.push_back(count_entry("warmup_steps", "actor steps toward the identity before episode 1", [](RunConfig& c) -> auto& { return c.train.warmup_steps; }));
    t.push_back(real_entry("warmup_alpha", "initial warm-up step size, decays to zero", [](RunConfig& c) -> auto& { return c.train.warmup_alpha; }));
    t.push_back(real_entry("gamma", "discount factor (recorded, unused)", [](RunConfig& c) -> auto& { return c.train.gamma; }));
    t.push_back({{"seed", "seed for synthesis and training"},
                 [](const RunConfig& c) { return std::to_string(c.train.seed); },
                 [](RunConfig& c, const std::string& v) {
                   c.train.seed = c.synth.seed = parse_number<std::uint64_t>("seed", v, "a non-negative integer");
                 }});
    t.push_back(bool_entry("augment", "random rot90/flip on buffer refill", [](RunConfig& c) -> auto& { return c.train.augment; }));
    t.push_back(bool_entry("record_timing", "write wall time to the log", [](RunConfig& c) -> auto& { return c.train.record_timing; }));
    t.push_back(count_entry("threads", "worker threads, 0 = auto", [](RunConfig& c) -> auto& { return c.train.threads; }));

    t.push_back(path_entry("data_dir", "dataset directory", [](RunConfig& c) -> auto& { return c.data_dir; }));
    t.push_back(count_entry("count", "synthetic patches", [](RunConfig& c) -> auto& { return c.synth.count; }));
    t.push_back(count_entry("patch_size", "HR patch side, divisible by 4", [](RunConfig& c) -> auto& { return c.synth.patch_size; }));
    t.push_back(real_entry("train_fraction", "share of patches in the train split", [](RunConfig& c) -> auto& { return c.synth.train_fraction; }));

    t.push_back(path_entry("checkpoint", "checkpoint file", [](RunConfig& c) -> auto& { return c.checkpoint; }));
    t.push_back(path_entry("log", "training log CSV", [](RunConfig& c) -> auto& { return c.log; }));
    t.push_back(path_entry("report", "evaluation report CSV", [](RunConfig& c) -> auto& { return c.report; }));
    t.push_back(count_entry("checkpoint_every", "episodes between checkpoints, 0 = final only", [](RunConfig& c) -> auto& { return c.checkpoint_every; }));
    t.push_back(bool_entry("resume", "continue from the checkpoint file", [](RunConfig& c) -> auto& { return c.resume; }));
    t.push_back({{"gradcheck_fault", "test hook: none or sign_flip"},
                 [](const RunConfig& c) { return c.gradcheck_fault; },
                 [](RunConfig& c, const std::string& v) {
                   if (v != "none" && v != "sign_flip") bad_value("gradcheck_fault", v, "none or sign_flip");
                   c.gradcheck_fault = v;
                 }});
    t.push_back(count_entry("gradcheck_instances", "random instances per gradient suite", [](RunConfig& c) -> auto& { return c.gradcheck_instances; }));
    return t;
  }();
  return table;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (e.key.name == key) return e;
  throw ValidationError("config: unknown key '" + key + "'");
}

}  // namespace

RunConfig::RunConfig() {
  network.feature_channels = 16;
  train.warmup_steps = 1000;
}

void RunConfig::validate() const {
  network.validate();
  train.validate();
  if (synth.patch_size == 0 || synth.patch_size % kScale != 0) {
    throw ValidationError("patch_size " + std::to_string(synth.patch_size) + " is not divisible by " +
                          std::to_string(kScale));
  }
  if (!(synth.train_fraction > 0.0 && synth.train_fraction <= 1.0)) {
    throw ValidationError("train_fraction must lie in (0, 1]");
  }
  if (gradcheck_instances == 0) throw ValidationError("gradcheck_instances must be >= 1");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  find_entry(key).set(config, value);
}

std::string get_config_value(const RunConfig& config, const std::string& key) {
  return find_entry(key).get(config);
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("override '" + assignment + "' is not key=value");
  set_config_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void parse_config_text(RunConfig& config, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(source + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ValidationError(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig config;
  parse_config_text(config, text.str(), path.string());
  return config;
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  for (const auto& e : entries()) {
    out += "# " + e.key.doc + "\n";
    out += e.key.name + " = " + e.get(config) + "\n";
  }
  return out;
}

}  // namespace spoa
