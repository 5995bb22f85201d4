#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "oracles.hpp"
#include "spoa/dataset.hpp"
#include "spoa/errors.hpp"
#include "spoa/image.hpp"
#include "spoa/metrics.hpp"
#include "spoa/rl.hpp"

using namespace spoa;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("spoa_data_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Tensor wave(std::size_t h, std::size_t w, double cycles_y, double cycles_x) {
  Tensor t({h, w, 1});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      t.at(y, x, 0) = 0.5 + 0.2 * std::cos(2 * std::numbers::pi *
                                           (cycles_y * (y + 0.5) / static_cast<double>(h) +
                                            cycles_x * (x + 0.5) / static_cast<double>(w)));
  return t;
}

}  // namespace

TEST_CASE("PNM decode, encode and errors") {
  const std::string p5 = std::string("P5\n2 2\n255\n") + std::string("\x00\x40\x80\xff", 4);
  const ImageBuffer img = decode_pnm(p5);
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.channels == 1);
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 64, 128, 255});
  CHECK(encode_pnm(img) == p5);

  const std::string commented = std::string("P5\n# made by hand\n2 2\n255\n") + std::string("\x00\x40\x80\xff", 4);
  CHECK(decode_pnm(commented) == img);

  CHECK_THROWS_AS(decode_pnm(std::string("P5\n2 2\n255\n") + std::string("\x00\x40\x80", 3)), ValidationError);
  CHECK_THROWS_AS(decode_pnm("P2\n2 2\n255\n0 0 0 0"), ValidationError);
  CHECK_THROWS_AS(decode_pnm(std::string("P5\n2 2\n65535\n") + std::string(8, '\0')), ValidationError);
  CHECK_THROWS_AS(decode_pnm("P5\n2"), ValidationError);

  std::mt19937_64 rng(1);
  ImageBuffer rgb{5, 3, 3, {}};
  for (int i = 0; i < 45; ++i) rgb.pixels.push_back(static_cast<std::uint8_t>(rng() & 0xff));
  const fs::path dir = scratch("pnm");
  save_image(rgb, dir / "a.ppm");
  CHECK(load_image(dir / "a.ppm") == rgb);
  const std::string bytes = slurp(dir / "a.ppm");
  save_image(load_image(dir / "a.ppm"), dir / "b.ppm");
  CHECK(slurp(dir / "b.ppm") == bytes);
  CHECK_THROWS_AS(load_image(dir / "missing.pgm"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("tensor conversion") {
  ImageBuffer img{3, 1, 1, {0, 128, 255}};
  const Tensor t = to_tensor(img);
  CHECK(t[2] == 1.0);
  CHECK(t[1] == 128.0 / 255.0);
  CHECK(from_tensor(t) == img);
  const ImageBuffer b = from_tensor(Tensor({1, 4, 1}, {1.2, -0.3, 0.5, 0.2}));
  CHECK(b.pixels == std::vector<std::uint8_t>{255, 0, 128, 51});
}

TEST_CASE("bicubic resampling") {
  SUBCASE("constants survive any resize") {
    const Tensor c({9, 7, 2}, 0.3125);
    for (auto [h, w] : {std::pair{3, 2}, {18, 14}, {9, 7}, {1, 1}, {40, 5}}) {
      const Tensor r = bicubic_resample(c, h, w);
      for (double v : r.data()) CHECK(v == 0.3125);
    }
  }
  SUBCASE("identity resize is exact") {
    std::mt19937_64 rng(2);
    const Tensor t = oracle::random_tensor({6, 11, 3}, rng);
    CHECK(bicubic_resample(t, 6, 11) == t);
  }
  SUBCASE("ramp downsample matches the expanded weights") {
    Tensor ramp({8, 8, 1});
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) ramp.at(y, x, 0) = 0.05 * x + 0.08 * y + 0.01 * x * y;
    const Tensor r = bicubic_resample(ramp, 2, 2);
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x)
        CHECK(r.at(y, x, 0) == doctest::Approx(oracle::bicubic_sample(ramp, y, x, 2, 2, 0)).epsilon(1e-13));
    std::mt19937_64 rng(3);
    const Tensor t = oracle::random_tensor({5, 7, 2}, rng);
    const Tensor up = bicubic_resample(t, 13, 9);
    for (std::size_t y = 0; y < 13; ++y)
      for (std::size_t x = 0; x < 9; ++x)
        for (std::size_t c = 0; c < 2; ++c)
          CHECK(up.at(y, x, c) == doctest::Approx(oracle::bicubic_sample(t, y, x, 13, 9, c)).epsilon(1e-13));
  }
  SUBCASE("linearity") {
    std::mt19937_64 rng(4);
    const Tensor a = oracle::random_tensor({12, 12, 1}, rng), b = oracle::random_tensor({12, 12, 1}, rng);
    Tensor mix(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) mix[i] = 0.3 * a[i] - 1.7 * b[i];
    const Tensor lhs = bicubic_resample(mix, 5, 17);
    const Tensor ra = bicubic_resample(a, 5, 17), rb = bicubic_resample(b, 5, 17);
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      const double rhs = 0.3 * ra[i] - 1.7 * rb[i];
      CHECK(std::abs(lhs[i] - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
    }
  }
  SUBCASE("low-frequency image survives the 4x round trip") {
    const Tensor t = wave(64, 64, 1.0, 0.5);
    const Tensor back = bicubic_resample(bicubic_resample(t, 16, 16), 64, 64);
    CHECK(psnr(back, t) > 40.0);
  }
  CHECK_THROWS_AS(bicubic_resample(Tensor({4, 4, 1}), 0, 3), ValidationError);
  CHECK(cubic_weight(0.0) == 1.0);
  CHECK(cubic_weight(1.0) == 0.0);
  CHECK(cubic_weight(2.0) == 0.0);
}

TEST_CASE("augmentations") {
  std::mt19937_64 rng(5);
  const Tensor t = oracle::random_tensor({6, 6, 2}, rng);
  const Tensor h = augment(t, Augmentation::HorizontalFlip);
  CHECK(augment(h, Augmentation::HorizontalFlip) == t);
  CHECK(augment(augment(t, Augmentation::VerticalFlip), Augmentation::VerticalFlip) == t);
  Tensor r = t;
  for (int i = 0; i < 4; ++i) r = augment(r, Augmentation::Rot90);
  CHECK(r == t);
  CHECK_FALSE(augment(t, Augmentation::Rot90) == t);

  const Tensor col({2, 1, 1}, {0.25, 0.75});
  CHECK(augment(col, Augmentation::VerticalFlip) == Tensor({2, 1, 1}, {0.75, 0.25}));
  CHECK_THROWS_AS(augment(Tensor({2, 3, 1}), Augmentation::Rot90), ValidationError);

  for (auto a : {Augmentation::Rot90, Augmentation::HorizontalFlip, Augmentation::VerticalFlip}) {
    auto before = std::vector<double>(t.data().begin(), t.data().end());
    const Tensor out = augment(t, a);
    auto after = std::vector<double>(out.data().begin(), out.data().end());
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    CHECK(before == after);
  }

  // Picks are uniform over three choices, and never rot90 for non-square tensors.
  std::array<int, 3> counts{};
  std::mt19937_64 pick(6);
  for (int i = 0; i < 3000; ++i) ++counts[static_cast<int>(pick_augmentation(t, pick))];
  for (int c : counts) CHECK(std::abs(c - 1000) < 120);
  for (int i = 0; i < 200; ++i) CHECK(pick_augmentation(Tensor({2, 4, 1}), pick) != Augmentation::Rot90);
}

TEST_CASE("augmenting a state pair equals degrading an augmented patch") {
  std::mt19937_64 rng(7);
  const Tensor hr = oracle::random_tensor({16, 16, 1}, rng);
  const StatePair pair = make_state_pair(hr);
  for (auto a : {Augmentation::Rot90, Augmentation::HorizontalFlip, Augmentation::VerticalFlip}) {
    const StatePair direct = make_state_pair(augment(hr, a));
    const Tensor moved = augment(pair.s0, a);
    CHECK(augment(pair.s_star, a) == direct.s_star);
    for (std::size_t i = 0; i < moved.size(); ++i) CHECK(std::abs(moved[i] - direct.s0[i]) < 1e-12);
  }
}

TEST_CASE("state pairs") {
  const StatePair flat = make_state_pair(Tensor({64, 64, 1}, 0.42));
  CHECK(flat.s0 == flat.s_star);
  CHECK(reward(flat.s0, flat.s_star) == 0.0);
  CHECK(flat.s0.shape() == Shape{64, 64, 1});
  CHECK_THROWS_AS(make_state_pair(Tensor({30, 32, 1})), ValidationError);

  const StatePair smooth = make_state_pair(wave(32, 32, 0.0, 1.0));
  Tensor checker({32, 32, 1});
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) checker.at(y, x, 0) = ((x / 2 + y / 2) % 2) ? 0.8 : 0.2;
  const StatePair sharp = make_state_pair(checker);
  CHECK(reward(smooth.s0, smooth.s_star) > reward(sharp.s0, sharp.s_star));

  for (std::size_t i = 0; i < 20; ++i) {
    const StatePair p = make_state_pair(synth_patch(i, 32, 3));
    CHECK(reward(p.s0, p.s_star) <= 0.0);
  }
}

TEST_CASE("step edge: the largest error sits on the edge") {
  for (std::size_t edge : {9u, 14u, 17u, 22u}) {
    const StatePair p = make_state_pair(step_edge_patch(32, edge, 0.2, 0.9));
    std::size_t best = 0;
    double worst = -1;
    for (std::size_t x = 0; x < 32; ++x) {
      double col = 0;
      for (std::size_t y = 0; y < 32; ++y) col = std::max(col, std::abs(p.s0.at(y, x, 0) - p.s_star.at(y, x, 0)));
      if (col > worst) {
        worst = col;
        best = x;
      }
    }
    INFO("edge " << edge << " max column " << best);
    CHECK(std::abs(static_cast<long>(best) - static_cast<long>(edge)) <= 1);
  }
}

TEST_CASE("synthetic dataset") {
  const SynthDataset a = synth_dataset({20, 32, 11, 0.8});
  const SynthDataset b = synth_dataset({20, 32, 11, 0.8});
  CHECK(a.patches == b.patches);
  CHECK(a.split == b.split);
  CHECK(std::count(a.split.begin(), a.split.end(), "train") == 16);
  for (const auto& p : a.patches) {
    CHECK(p.shape() == Shape{32, 32, 1});
    for (double v : p.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK_FALSE(synth_dataset({20, 32, 12, 0.8}).patches == a.patches);
  CHECK_THROWS_WITH_AS(synth_dataset({0, 32, 0, 0.8}), "empty dataset requested", ValidationError);
  CHECK_THROWS_AS(synth_dataset({4, 30, 0, 0.8}), ValidationError);
}

TEST_CASE("dataset files and manifest") {
  const fs::path d1 = scratch("synth1"), d2 = scratch("synth2");
  const DatasetManifest m = write_synth_dataset(d1, {10, 16, 7, 0.8});
  write_synth_dataset(d2, {10, 16, 7, 0.8});
  CHECK(m.entries.size() == 10);
  CHECK(slurp(d1 / "manifest.csv") == slurp(d2 / "manifest.csv"));
  for (const auto& e : m.entries) CHECK(slurp(d1 / e.path) == slurp(d2 / e.path));
  CHECK(slurp(d1 / "manifest.csv").rfind("path,origin_x,origin_y,split\n", 0) == 0);

  const DatasetManifest back = read_manifest(d1 / "manifest.csv", 16);
  CHECK(back.entries.size() == 10);
  const auto train = load_split(d1 / "manifest.csv", 16, "train");
  const auto test = load_split(d1 / "manifest.csv", 16, "test");
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  CHECK(load_split(d1 / "manifest.csv", 16, "all").size() == 10);
  // Patches are stored as 8-bit images, so the loaded goal is the quantised synthetic patch.
  const SynthDataset mem = synth_dataset({10, 16, 7, 0.8});
  CHECK(train[0].s_star == to_tensor(from_tensor(mem.patches[train[0].id])));

  std::ofstream(d1 / "bad.csv") << "path,origin_x,origin_y,split\npatches/x.pgm,0,0,holdout\n";
  CHECK_THROWS_AS(read_manifest(d1 / "bad.csv", 16), ValidationError);
  CHECK_THROWS_AS(read_manifest(d1 / "none.csv", 16), IoError);
  fs::remove_all(d1);
  fs::remove_all(d2);
}
