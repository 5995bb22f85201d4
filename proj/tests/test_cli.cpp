#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spoa/commands.hpp"
#include "spoa/config.hpp"
#include "spoa/errors.hpp"
#include "spoa/image.hpp"

using namespace spoa;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "spoa");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("spoa_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A config small enough to train in well under a second.
std::string tiny_config(const fs::path& dir) {
  return "data_dir = " + (dir / "data").string() + "\n" + "checkpoint = " + (dir / "model.ckpt").string() + "\n" +
         "log = " + (dir / "log.csv").string() + "\n" + "report = " + (dir / "report.csv").string() + "\n" +
         "count = 10\npatch_size = 16\nfeature_channels = 4\nn_fe = 2\nn_rb = 1\nn_tb = 2\nn_policy_blocks = 1\n"
         "buffer_size = 2\nepisodes = 4\nwarmup_steps = 3\nalpha = 1e-3\nseed = 7\n";
}

std::vector<std::string> method_rows(const std::string& csv, const std::string& method) {
  std::vector<std::string> rows;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);)
    if (line.find("," + method + ",") != std::string::npos) rows.push_back(line);
  return rows;
}

}  // namespace

TEST_CASE("config defaults, parsing and overrides") {
  const RunConfig d;
  CHECK(d.network.feature_channels == 16);
  CHECK(d.train.warmup_steps == 1000);
  CHECK(d.train.warmup_alpha == 1e-3);
  CHECK(d.synth.patch_size == 32);
  CHECK(d.synth.count == 200);
  CHECK(d.train.episodes == 2000);
  CHECK(d.train.alpha == 1e-4);
  CHECK(d.train.beta == 1e-7);
  CHECK(d.train.buffer_size == 10);
  CHECK(d.network.n_fe == 3);
  CHECK(d.network.leaky_slope == 0.1);

  RunConfig c;
  parse_config_text(c, "# comment\n  episodes = 12  # trailing\n\nalpha=2.5e-3\naugment = false\n");
  CHECK(c.train.episodes == 12);
  CHECK(c.train.alpha == 2.5e-3);
  CHECK_FALSE(c.train.augment);
  apply_override(c, "seed=99");
  CHECK(c.train.seed == 99);
  CHECK(c.synth.seed == 99);

  CHECK_THROWS_WITH_AS(parse_config_text(c, "epsiodes = 3\n", "run.cfg"), doctest::Contains("unknown key 'epsiodes'"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(parse_config_text(c, "\nalpha = fast\n", "run.cfg"), doctest::Contains("run.cfg:2"),
                       ValidationError);
  CHECK_THROWS_AS(parse_config_text(c, "episodes = -1\n"), ValidationError);
  CHECK_THROWS_AS(parse_config_text(c, "episodes\n"), ValidationError);
  CHECK_THROWS_AS(apply_override(c, "augment=maybe"), ValidationError);
  CHECK_THROWS_AS(apply_override(c, "no_equals_sign"), ValidationError);
}

TEST_CASE("config dump round-trips") {
  RunConfig c;
  parse_config_text(c, "alpha = 0.1\nbeta = 3.3333333333333335e-07\nlambda = 0.30000000000000004\ndata_dir = x y\n"
                       "resume = true\ngradcheck_fault = sign_flip\nseed = 18446744073709551615\n");
  RunConfig back;
  parse_config_text(back, dump_config(c));
  CHECK(dump_config(back) == dump_config(c));
  CHECK(back.train.beta == c.train.beta);
  CHECK(back.network.lambda == c.network.lambda);
  CHECK(back.data_dir == "x y");
  CHECK(back.train.seed == 18446744073709551615ULL);
  for (const auto& k : config_keys()) CHECK(get_config_value(back, k.name) == get_config_value(c, k.name));
  CHECK(dump_config(RunConfig{}).find("\nbeta = 1e-07\n") != std::string::npos);
}

TEST_CASE("thread cap from the environment") {
  RunConfig c;
  c.train.threads = 0;
  setenv("SPOA_THREADS", "2", 1);
  CHECK(effective_threads(c) == 2);
  c.train.threads = 1;
  CHECK(effective_threads(c) == 1);
  setenv("SPOA_THREADS", "0", 1);
  c.train.threads = 3;
  CHECK(effective_threads(c) == 3);
  setenv("SPOA_THREADS", "lots", 1);
  CHECK_THROWS_AS(effective_threads(c), ValidationError);
  unsetenv("SPOA_THREADS");
}

TEST_CASE("cli: synth validation and exit codes") {
  const fs::path dir = scratch("synth");
  const std::string data = "data_dir=" + (dir / "d").string();
  CHECK(cli({"--set", data, "--set", "count=0", "synth"}).err.find("empty dataset requested") != std::string::npos);
  CHECK(cli({"--set", data, "--set", "count=0", "synth"}).code == kExitValidation);
  CHECK(cli({"--set", data, "--set", "patch_size=30", "synth"}).code == kExitValidation);
  CHECK(cli({"--set", "bogus=1", "synth"}).code == kExitValidation);
  CHECK(cli({"synth", "--no-such-flag"}).code == kExitValidation);
  CHECK(cli({}).code == kExitValidation);
  CHECK(cli({"--config", (dir / "missing.cfg").string(), "synth"}).code == kExitRuntime);

  // Two synth runs with the same seed write identical trees.
  for (const char* sub : {"a", "b"})
    REQUIRE(cli({"--set", "data_dir=" + (dir / sub).string(), "--set", "count=10", "--seed", "7", "synth"}).code == 0);
  CHECK(slurp(dir / "a" / "manifest.csv") == slurp(dir / "b" / "manifest.csv"));
  for (const auto& e : fs::directory_iterator(dir / "a" / "patches"))
    CHECK(slurp(e.path()) == slurp(dir / "b" / "patches" / e.path().filename()));
  fs::remove_all(dir);
}

TEST_CASE("cli: dump-config reproduces the effective configuration") {
  const fs::path dir = scratch("dump");
  CHECK(cli({"--dump-config"}).code == 0);
  const Run none = cli({"--seed", "5"});
  CHECK(none.code == kExitValidation);
  CHECK(none.err.find("subcommand is required") != std::string::npos);
  const Run r = cli({"--set", "episodes=33", "--seed", "5", "--dump-config", "gradcheck"});
  REQUIRE(r.code == 0);
  std::ofstream(dir / "dumped.cfg") << r.out;
  const Run again = cli({"--config", (dir / "dumped.cfg").string(), "--dump-config", "gradcheck"});
  CHECK(again.out == r.out);
  CHECK(load_config(dir / "dumped.cfg").train.episodes == 33);
  fs::remove_all(dir);
}

TEST_CASE("cli: gradcheck passes and the fault hook fails it") {
  const Run ok = cli({"gradcheck"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("actor") != std::string::npos);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  const Run bad = cli({"--set", "gradcheck_fault=sign_flip", "gradcheck"});
  CHECK(bad.code == kExitCheckFailed);
}

TEST_CASE("cli: train, eval and infer end to end") {
  const fs::path dir = scratch("e2e");
  std::ofstream(dir / "run.cfg") << tiny_config(dir);
  const std::string cfg = (dir / "run.cfg").string();
  REQUIRE(cli({"--config", cfg, "synth"}).code == 0);

  SUBCASE("zero episodes leave the initial parameters") {
    REQUIRE(cli({"--config", cfg, "--set", "episodes=0", "train"}).code == 0);
    const RunConfig rc = load_config(dir / "run.cfg");
    CHECK(load_checkpoint(dir / "model.ckpt", rc.network).params == init_parameters(rc.network, 7));
  }
  SUBCASE("training is byte-reproducible and resumable") {
    const Run first = cli({"--config", cfg, "train"});
    REQUIRE(first.code == 0);
    CHECK(first.out.find("final mean reward") != std::string::npos);
    CHECK(first.out.find("final success rate") != std::string::npos);
    const std::string log = slurp(dir / "log.csv"), ckpt = slurp(dir / "model.ckpt");
    REQUIRE(cli({"--config", cfg, "train"}).code == 0);
    CHECK(slurp(dir / "log.csv") == log);
    CHECK(slurp(dir / "model.ckpt") == ckpt);

    REQUIRE(cli({"--config", cfg, "--set", "episodes=2", "train"}).code == 0);
    REQUIRE(cli({"--config", cfg, "--set", "resume=true", "train"}).code == 0);
    CHECK(slurp(dir / "log.csv") == log);
    CHECK(slurp(dir / "model.ckpt") == ckpt);

    // Eval writes both rows; the bicubic row does not depend on the checkpoint.
    REQUIRE(cli({"--config", cfg, "eval"}).code == 0);
    const std::string report = slurp(dir / "report.csv");
    CHECK(report.find("mean,spoa,") != std::string::npos);
    REQUIRE(cli({"--config", cfg, "--set", "episodes=0", "train"}).code == 0);
    REQUIRE(cli({"--config", cfg, "eval"}).code == 0);
    const std::string other = slurp(dir / "report.csv");
    CHECK(!method_rows(report, "bicubic").empty());
    CHECK(method_rows(report, "bicubic") == method_rows(other, "bicubic"));

    // Inference: 16x16 in, 64x64 out, deterministic.
    ImageBuffer small{16, 16, 1, std::vector<std::uint8_t>(256, 90)};
    save_image(small, dir / "in.pgm");
    REQUIRE(cli({"--config", cfg, "infer", (dir / "in.pgm").string(), (dir / "out1.pgm").string()}).code == 0);
    REQUIRE(cli({"--config", cfg, "infer", (dir / "in.pgm").string(), (dir / "out2.pgm").string()}).code == 0);
    const ImageBuffer big = load_image(dir / "out1.pgm");
    CHECK(big.width == 64);
    CHECK(big.height == 64);
    CHECK(slurp(dir / "out1.pgm") == slurp(dir / "out2.pgm"));
    ImageBuffer rgb{4, 4, 3, std::vector<std::uint8_t>(48, 10)};
    save_image(rgb, dir / "rgb.ppm");
    CHECK(cli({"--config", cfg, "infer", (dir / "rgb.ppm").string(), (dir / "o.ppm").string()}).code ==
          kExitValidation);
  }
  SUBCASE("a corrupt checkpoint is reported by name") {
    std::ofstream(dir / "model.ckpt", std::ios::binary) << "NOTSPOA";
    const Run r = cli({"--config", cfg, "eval"});
    CHECK(r.code == kExitValidation);
    CHECK(r.err.find("model.ckpt") != std::string::npos);
    CHECK(r.err.find("magic") != std::string::npos);
  }
  fs::remove_all(dir);
}
