#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spoa/dataset.hpp"
#include "spoa/networks.hpp"
#include "spoa/rl.hpp"

namespace spoa {

/// Everything a command needs, read from a key=value file plus overrides.
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  SynthOptions synth;
  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint = "spoa.ckpt";
  std::filesystem::path log = "train_log.csv";
  std::filesystem::path report = "eval_report.csv";
  std::size_t checkpoint_every = 0;  // 0 = final checkpoint only
  bool resume = false;
  std::string gradcheck_fault = "none";
  std::size_t gradcheck_instances = 1;

  // Desk defaults: 16 feature channels and a 1000-step actor warm-up.
  RunConfig();
  void validate() const;
  std::filesystem::path manifest_path() const { return data_dir / "manifest.csv"; }
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

/// Every recognised key in dump order.
const std::vector<ConfigKey>& config_keys();

/// Applies one `key=value` assignment; unknown keys and malformed values throw ValidationError.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
void apply_override(RunConfig& config, const std::string& assignment);
std::string get_config_value(const RunConfig& config, const std::string& key);

/// Lines of `key = value`; `#` starts a comment. `source` names the input in errors.
void parse_config_text(RunConfig& config, const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its effective value; parsing the dump reproduces `config`.
std::string dump_config(const RunConfig& config);

}  // namespace spoa
