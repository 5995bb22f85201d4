#include "spoa/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <iomanip>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "spoa/errors.hpp"
#include "spoa/image.hpp"
#include "spoa/parallel.hpp"

namespace spoa {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

namespace {

RunConfig with_threads(const RunConfig& config) {
  RunConfig c = config;
  c.train.threads = effective_threads(config);
  return c;
}

std::vector<StatePair> load_pairs(const RunConfig& config, const std::string& split) {
  auto pairs = load_split(config.manifest_path(), config.synth.patch_size, split);
  if (pairs.empty()) throw ValidationError(config.manifest_path().string() + ": no '" + split + "' entries");
  return pairs;
}

void print_report_line(std::ostream& out, const MetricReport& r) {
  out << std::left << std::setw(8) << r.method << std::right << std::fixed << std::setprecision(4)
      << " psnr_db=" << r.psnr_db << " ssim=" << std::setprecision(5) << r.ssim << std::setprecision(4)
      << " sre_db=" << r.sre_db << " sam_deg=" << r.sam_deg;
  if (r.infinite_psnr_count > 0) out << " (" << r.infinite_psnr_count << " exact images excluded)";
  out << "\n" << std::defaultfloat;
}

}  // namespace

std::size_t effective_threads(const RunConfig& config) {
  std::size_t threads = config.train.threads;
  if (const char* env = std::getenv("SPOA_THREADS"); env != nullptr && *env != '\0') {
    RunConfig probe;
    set_config_value(probe, "threads", env);
    const std::size_t cap = probe.train.threads;
    if (cap > 0) threads = threads == 0 ? cap : std::min(threads, cap);
  }
  return threads;
}

DatasetManifest cmd_synth(const RunConfig& config, std::ostream& out) {
  config.validate();
  const DatasetManifest manifest = write_synth_dataset(config.data_dir, config.synth);
  const auto train = std::count_if(manifest.entries.begin(), manifest.entries.end(),
                                   [](const ManifestEntry& e) { return e.split == "train"; });
  out << "wrote " << manifest.entries.size() << " patches (" << train << " train, "
      << manifest.entries.size() - static_cast<std::size_t>(train) << " test) to " << config.data_dir.string() << "\n";
  return manifest;
}

std::vector<EpisodeRecord> cmd_train(const RunConfig& input, std::ostream& out) {
  const RunConfig config = with_threads(input);
  config.validate();
  const auto pairs = load_pairs(config, "train");

  std::vector<EpisodeRecord> history;
  TrainingState state;
  if (config.resume && std::filesystem::exists(config.checkpoint)) {
    state = load_checkpoint(config.checkpoint, config.network);
    if (state.episode > 0) {
      history = read_training_log(config.log);
      if (history.size() < state.episode) {
        throw ValidationError(config.log.string() + ": log has " + std::to_string(history.size()) +
                              " episodes but the checkpoint is at episode " + std::to_string(state.episode));
      }
      history.resize(state.episode);
    }
    out << "resuming from episode " << state.episode << "\n";
  } else {
    state = initial_state(config.network, config.train.seed);
  }

  auto flush = [&](const std::vector<EpisodeRecord>& fresh, const TrainingState& s) {
    std::vector<EpisodeRecord> all = history;
    all.insert(all.end(), fresh.begin(), fresh.end());
    fill_windowed_rewards(all);
    write_training_log(config.log, all);
    save_checkpoint(config.checkpoint, s);
    return all;
  };

  std::vector<EpisodeRecord> fresh;
  const EpisodeCallback on_episode = [&](const EpisodeRecord& r, const TrainingState& s) {
    fresh.push_back(r);
    if (config.checkpoint_every > 0 && r.episode % config.checkpoint_every == 0) flush(fresh, s);
  };
  train(pairs, state, config.network, config.train, on_episode);
  const auto all = flush(fresh, state);

  if (all.empty()) {
    out << "no episodes run; checkpoint holds the initial parameters\n";
  } else {
    const EpisodeRecord& last = all.back();
    out << "episodes: " << last.episode << "\n"
        << "final mean reward: " << std::setprecision(8) << last.mean_reward << "\n"
        << "final success rate: " << static_cast<double>(last.success_count) / config.train.buffer_size << "\n"
        << std::defaultfloat;
  }
  out << "checkpoint: " << config.checkpoint.string() << "\nlog: " << config.log.string() << "\n";
  return all;
}

bool cmd_gradcheck(const RunConfig& config, std::ostream& out) {
  config.validate();
  GradcheckOptions options;
  options.seed = config.train.seed;
  options.instances = config.gradcheck_instances;
  options.fault = config.gradcheck_fault == "sign_flip" ? GradcheckFault::SignFlip : GradcheckFault::None;
  bool ok = true;
  for (const auto& r : run_gradcheck(options)) {
    out << std::left << std::setw(18) << r.name << std::right << " max_rel_error=" << std::scientific
        << std::setprecision(3) << r.max_rel_error << " tol=" << r.tolerance << std::defaultfloat
        << " checked=" << r.checked << " skipped=" << r.skipped << (r.passed ? " PASS" : " FAIL") << "\n";
    ok = ok && r.passed;
  }
  return ok;
}

SplitEvaluation cmd_eval(const RunConfig& input, std::ostream& out) {
  const RunConfig config = with_threads(input);
  config.validate();
  const TrainingState state = load_checkpoint(config.checkpoint, config.network);
  const auto pairs = load_pairs(config, "test");
  SplitEvaluation result = evaluate_split(state.params, pairs, config.network, config.train.threads);
  write_report(config.report, {result.spoa, result.bicubic});
  out << "test images: " << pairs.size() << "\n";
  print_report_line(out, result.spoa);
  print_report_line(out, result.bicubic);
  out << "report: " << config.report.string() << "\n";
  return result;
}

void cmd_infer(const RunConfig& config, const std::filesystem::path& input, const std::filesystem::path& output,
               std::ostream& out) {
  config.validate();
  const TrainingState state = load_checkpoint(config.checkpoint, config.network);
  const Tensor low = to_tensor(load_image(input));
  if (low.channels() != config.network.input_channels) {
    throw ValidationError(input.string() + ": image has " + std::to_string(low.channels()) +
                          " channels, the network expects " + std::to_string(config.network.input_channels));
  }
  const Tensor s0 = bicubic_resample(low, low.height() * kScale, low.width() * kScale);
  const Tensor s_hat = clamp01(actor_forward(s0, state.params, config.network).arrived_state());
  save_image(from_tensor(s_hat), output);
  out << "wrote " << s_hat.width() << "x" << s_hat.height() << " image to " << output.string() << "\n";
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Super-resolution with a policy-gradient actor and a Siamese policy network"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool dump = false;
  app.add_option("--config", config_path, "key=value configuration file");
  app.add_option("--set", overrides, "override one key, e.g. --set episodes=100")->allow_extra_args(false);
  auto* seed_opt = app.add_option("--seed", seed, "seed for synthesis and training");
  app.add_flag("--dump-config", dump, "print the effective configuration and exit");

  auto* synth = app.add_subcommand("synth", "write synthetic HR patches and a manifest");
  auto* train_cmd = app.add_subcommand("train", "train on the train split");
  auto* grad = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  auto* eval = app.add_subcommand("eval", "score the checkpoint and bicubic on the test split");
  auto* infer = app.add_subcommand("infer", "upscale one PGM/PPM image 4x");
  std::string infer_in, infer_out;
  infer->add_option("input", infer_in, "low-resolution PGM/PPM")->required();
  infer->add_option("output", infer_out, "output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& o : overrides) apply_override(config, o);
    if (*seed_opt) set_config_value(config, "seed", std::to_string(seed));
    if (dump) {
      out << dump_config(config);
      return kExitOk;
    }
    if (app.get_subcommands().empty()) throw ValidationError("a subcommand is required (see --help)");
    config.validate();
    if (synth->parsed()) {
      cmd_synth(config, out);
    } else if (train_cmd->parsed()) {
      cmd_train(config, out);
    } else if (grad->parsed()) {
      if (!cmd_gradcheck(config, out)) {
        err << "gradcheck: at least one suite failed\n";
        return kExitCheckFailed;
      }
    } else if (eval->parsed()) {
      cmd_eval(config, out);
    } else if (infer->parsed()) {
      cmd_infer(config, infer_in, infer_out, out);
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace spoa
