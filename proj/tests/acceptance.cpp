// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion names as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "spoa/commands.hpp"
#include "spoa/dataset.hpp"
#include "spoa/gradcheck.hpp"
#include "spoa/metrics.hpp"
#include "spoa/rl.hpp"

using namespace spoa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

NetworkConfig tiny_network() {
  NetworkConfig c;
  c.input_channels = 1;
  c.feature_channels = 4;
  c.n_fe = 2;
  c.n_rb = 2;
  c.n_tb = 2;
  c.n_policy_blocks = 2;
  return c;
}

const fs::path kWork = fs::absolute("acceptance_work");

// ---- gradients -------------------------------------------------------------

Outcome gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  bool ok = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    GradcheckOptions options;
    options.seed = seed;
    options.instances = 2;
    for (const auto& suite : {check_primitives(options), check_actor_gradient(options), check_policy_gradient(options)}) {
      ok = ok && suite.passed;
      worst = std::max(worst, suite.max_rel_error);
      checked += suite.checked;
      skipped += suite.skipped;
    }
  }
  const double elapsed = seconds_since(start);
  return {ok && worst < 1e-4 && elapsed < 60.0,
          fmt("max rel error %.3e (< 1e-4) over %zu coordinates, %zu kink-skipped, %.1f s (< 60 s)", worst, checked,
              skipped, elapsed)};
}

Outcome combined_identity() {
  const NetworkConfig net = tiny_network();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> bias(-0.1, 0.1);
  double worst = 0.0;
  std::size_t compared = 0;
  for (int instance = 0; instance < 20; ++instance) {
    TrainingState state = initial_state(net, rng());
    for (auto* group : {&state.params.feature, &state.params.actor, &state.params.policy})
      for (auto& nk : *group)
        for (auto& b : nk.kernel.bias) b = bias(rng);
    state.params.policy_bias = bias(rng);
    ReplayBuffer buffer(3);
    for (std::size_t i = 0; i < 3; ++i)
      buffer.add({oracle::random_tensor({8, 8, 1}, rng), oracle::random_tensor({8, 8, 1}, rng), i});

    const ParameterSet snapshot = state.params;
    const auto fused = spoa_update(buffer, state, net, 1e-4, 1e-7, 1).flatten(Partition::All);
    auto separate = actor_gradient(buffer, snapshot, net, 1).flatten(Partition::FeatureActor);
    const auto policy = policy_gradient(buffer, snapshot, net, 1).flatten(Partition::Policy);
    separate.insert(separate.end(), policy.begin(), policy.end());
    if (fused.size() != separate.size()) return {false, "layout mismatch between fused and separate gradients"};
    for (std::size_t i = 0; i < fused.size(); ++i) {
      worst = std::max(worst, relative_error(fused[i], separate[i], std::numeric_limits<double>::min()));
      ++compared;
    }
  }
  return {worst < 1e-12, fmt("20 instances, %zu entries, max rel error %.3e (< 1e-12)", compared, worst)};
}

// ---- reward ------------------------------------------------------------------

Outcome reward_law() {
  std::mt19937_64 rng(77);
  std::size_t positive = 0;
  double largest = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) {
    const std::size_t h = 1 + rng() % 12, w = 1 + rng() % 12, c = 1 + rng() % 3;
    const Tensor a = oracle::random_tensor({h, w, c}, rng, -1.0, 2.0);
    const Tensor b = oracle::random_tensor({h, w, c}, rng, -1.0, 2.0);
    const double r = reward(a, b);
    largest = std::max(largest, r);
    if (r > 0.0 || reward(a, a) != 0.0) ++positive;
  }

  // Fixed point at desk size: constant patch so s0 == s*, identity actor.
  RunConfig desk;
  const NetworkConfig& net = desk.network;
  const std::vector<StatePair> flat{make_state_pair(Tensor({32, 32, 1}, 0.45), 0)};
  if (!(flat[0].s0 == flat[0].s_star)) return {false, "constant patch did not survive the bicubic round trip"};
  TrainingState state = initial_state(net, 0);
  state.params = identity_parameters(net);
  const ParameterSet before = state.params;
  TrainConfig cfg = desk.train;
  cfg.buffer_size = 4;
  cfg.threads = 1;
  bool fixed = true;
  for (int e = 0; e < 3; ++e) {
    const EpisodeRecord r = run_episode(flat, state, net, cfg);
    fixed = fixed && r.mean_reward == 0.0 && state.params == before;
  }
  return {positive == 0 && fixed,
          fmt("1000 random pairs: max reward %.3e, %zu violations; fixed-point episodes: reward 0 and parameters "
              "unchanged = %s",
              largest, positive, fixed ? "yes" : "no")};
}

// ---- desk-scale training ---------------------------------------------------------

struct DeskRun {
  bool done = false;
  std::string error;
  double train_seconds = 0.0;
  std::vector<EpisodeRecord> log;
  SplitEvaluation eval;
};

DeskRun& desk_run() {
  static DeskRun run;
  if (run.done) return run;
  run.done = true;
  try {
    RunConfig config;  // desk defaults: 200 patches of 32x32, 2000 episodes
    const fs::path dir = kWork / "desk";
    fs::remove_all(dir);
    fs::create_directories(dir);
    config.data_dir = dir / "data";
    config.checkpoint = dir / "spoa.ckpt";
    config.log = dir / "train_log.csv";
    config.report = dir / "eval_report.csv";
    std::ostringstream sink;
    cmd_synth(config, sink);
    const auto start = std::chrono::steady_clock::now();
    cmd_train(config, sink);
    run.train_seconds = seconds_since(start);
    run.log = read_training_log(config.log);
    run.eval = cmd_eval(config, sink);
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

double mean_windowed(const std::vector<EpisodeRecord>& log, std::size_t from, std::size_t count) {
  double sum = 0.0;
  for (std::size_t i = from; i < from + count; ++i) sum += log[i].windowed_reward;
  return sum / static_cast<double>(count);
}

Outcome reward_trend() {
  const DeskRun& run = desk_run();
  if (!run.error.empty()) return {false, "desk run failed: " + run.error};
  if (run.log.size() != 2000) return {false, fmt("expected 2000 log rows, got %zu", run.log.size())};
  const double first = mean_windowed(run.log, 0, 100);
  const double last = mean_windowed(run.log, run.log.size() - 100, 100);
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  return {last > first && run.train_seconds < 900.0,
          fmt("windowed reward first 100 %.6e, last 100 %.6e; training %.1f s (< 900 s) on %u hardware thread(s)",
              first, last, run.train_seconds, cores)};
}

Outcome sr_improvement() {
  const DeskRun& run = desk_run();
  if (!run.error.empty()) return {false, "desk run failed: " + run.error};
  const MetricReport& m = run.eval.spoa;
  const MetricReport& b = run.eval.bicubic;
  const double dpsnr = m.psnr_db - b.psnr_db, dssim = m.ssim - b.ssim;
  return {dpsnr >= 0.3 && dssim >= 0.001,
          fmt("%zu test images: PSNR %.4f vs bicubic %.4f (+%.4f dB, need 0.3); SSIM %.5f vs %.5f (+%.5f, need 0.001)",
              m.images.size(), m.psnr_db, b.psnr_db, dpsnr, m.ssim, b.ssim, dssim)};
}

// ---- metrics and resampling ---------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(9);
  double dp = 0.0, ds = 0.0, dr = 0.0, da = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t h = 11 + rng() % 14, w = 11 + rng() % 14, c = 1 + rng() % 3;
    const Tensor x = oracle::random_tensor({h, w, c}, rng, 0.05, 1.0);
    Tensor y = x;
    const double noise = 0.01 + 0.2 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::normal_distribution<double> n(0.0, noise);
    for (auto& v : y.data()) v = std::clamp(v + n(rng), 0.0, 1.0);
    dp = std::max(dp, std::abs(psnr(y, x) - oracle::psnr(y, x)));
    ds = std::max(ds, std::abs(ssim(y, x) - oracle::ssim(y, x)));
    dr = std::max(dr, std::abs(sre(x, y) - oracle::sre(x, y)));
    da = std::max(da, std::abs(sam(y, x) - oracle::sam(y, x)));
  }
  Tensor base({16, 16, 1});
  for (std::size_t i = 0; i < base.size(); ++i) base[i] = 0.1 + 0.7 * static_cast<double>(i % 17) / 17.0;
  Tensor shifted = base;
  for (auto& v : shifted.data()) v += 16.0 / 255.0;
  const double offset_psnr = psnr(shifted, base);
  const double closed_form = 20.0 * std::log10(255.0 / 16.0);
  Tensor e1({4, 4, 2}), e2({4, 4, 2});
  for (std::size_t p = 0; p < 16; ++p) {
    e1[2 * p] = 0.7;
    e2[2 * p + 1] = 0.3;
  }
  const double right_angle = sam(e1, e2);
  const bool ok = dp < 1e-9 && ds < 1e-6 && dr < 1e-9 && da < 1e-9 && std::abs(offset_psnr - closed_form) < 1e-9 &&
                  std::abs(offset_psnr - 24.0412) < 0.01 && std::abs(right_angle - 90.0) < 1e-9;
  return {ok, fmt("100 pairs, max |diff|: PSNR %.2e, SSIM %.2e, SRE %.2e, SAM %.2e; offset PSNR %.6f "
                  "(20log10(255/16) = %.6f, quoted 24.0412); orthogonal SAM %.12f",
                  dp, ds, dr, da, offset_psnr, closed_form, right_angle)};
}

Outcome bicubic_resampler() {
  bool constants = true;
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{3, 5}, {32, 32}, {1, 1}, {50, 7}}) {
    const Tensor resized = bicubic_resample(Tensor({12, 10, 2}, 0.6875), h, w);
    for (double v : resized.data()) constants = constants && v == 0.6875;
  }
  std::mt19937_64 rng(12);
  const Tensor t = oracle::random_tensor({9, 13, 3}, rng);
  const bool identity = bicubic_resample(t, 9, 13) == t;

  const Tensor a = oracle::random_tensor({16, 16, 1}, rng), b = oracle::random_tensor({16, 16, 1}, rng);
  Tensor mix(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) mix[i] = 2.5 * a[i] - 0.75 * b[i];
  const Tensor lhs = bicubic_resample(mix, 4, 4), ra = bicubic_resample(a, 4, 4), rb = bicubic_resample(b, 4, 4);
  const Tensor lhs_up = bicubic_resample(mix, 64, 64), ua = bicubic_resample(a, 64, 64), ub = bicubic_resample(b, 64, 64);
  double linearity = 0.0;
  auto compare = [&](const Tensor& l, const Tensor& x, const Tensor& y) {
    for (std::size_t i = 0; i < l.size(); ++i) {
      const double rhs = 2.5 * x[i] - 0.75 * y[i];
      linearity = std::max(linearity, std::abs(l[i] - rhs) / std::max(std::abs(rhs), 1e-300));
    }
  };
  compare(lhs, ra, rb);
  compare(lhs_up, ua, ub);

  Tensor wave({64, 64, 1});
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x)
      wave.at(y, x, 0) = 0.5 + 0.25 * std::sin(2.0 * std::numbers::pi * (x + 0.5) / 64.0);
  const double round_trip = psnr(bicubic_resample(bicubic_resample(wave, 16, 16), 64, 64), wave);
  return {constants && identity && linearity < 1e-12 && round_trip > 40.0,
          fmt("constants exact: %s; identity exact: %s; linearity max rel %.2e (< 1e-12); DC+sinusoid round trip "
              "%.2f dB (> 40)",
              constants ? "yes" : "no", identity ? "yes" : "no", linearity, round_trip)};
}

// ---- determinism ----------------------------------------------------------------

int cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"spoa"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome determinism() {
  std::vector<std::string> artifacts;
  std::vector<fs::path> roots;
  for (const char* name : {"run_a", "run_b"}) {
    const fs::path dir = kWork / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    roots.push_back(dir);
    const std::vector<std::string> common{"--seed",  "31",
                                          "--set",   "data_dir=" + (dir / "data").string(),
                                          "--set",   "checkpoint=" + (dir / "spoa.ckpt").string(),
                                          "--set",   "log=" + (dir / "train_log.csv").string(),
                                          "--set",   "report=" + (dir / "eval_report.csv").string(),
                                          "--set",   "episodes=40",
                                          "--set",   "warmup_steps=40"};
    for (const char* command : {"synth", "train", "eval"}) {
      auto args = common;
      args.emplace_back(command);
      if (cli(args) != 0) return {false, std::string(command) + " failed in " + dir.string()};
    }
  }
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(roots[0])) {
    if (!entry.is_regular_file()) continue;
    const fs::path twin = roots[1] / fs::relative(entry.path(), roots[0]);
    ++files;
    if (!fs::exists(twin) || slurp(entry.path()) != slurp(twin)) ++differing;
  }
  return {files > 200 && differing == 0,
          fmt("synth+train+eval twice (40 warm-up steps, 40 episodes): %zu files compared, %zu differ", files,
              differing)};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-suite", gradient_suite},   {"combined-identity", combined_identity},
      {"reward-law", reward_law},           {"reward-trend", reward_trend},
      {"sr-improvement", sr_improvement},   {"metric-oracles", metric_oracles},
      {"bicubic-resampler", bicubic_resampler}, {"determinism", determinism},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", outcome.pass ? "PASS" : "FAIL", name.c_str(), outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
