#include "spoa/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "spoa/errors.hpp"
#include "spoa/image.hpp"

namespace spoa {

namespace {

constexpr double kKeysA = -0.5;

struct Taps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

// Precomputed taps for each output coordinate along one axis.
std::vector<Taps> axis_taps(std::size_t in, std::size_t out) {
  std::vector<Taps> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) {
      const auto pos = static_cast<std::ptrdiff_t>(base) + k - 1;
      taps[i].index[static_cast<std::size_t>(k)] =
          static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(pos, 0, static_cast<std::ptrdiff_t>(in) - 1));
      const double w = cubic_weight(t - static_cast<double>(k - 1));
      taps[i].weight[static_cast<std::size_t>(k)] = w;
      sum += w;
    }
    for (auto& w : taps[i].weight) w /= sum;
  }
  return taps;
}

// Interpolates relative to tap 1 (the floor sample) so constant runs come out exact.
inline double interpolate(const Taps& taps, const double* values, std::size_t stride) {
  const double anchor = values[taps.index[1] * stride];
  double acc = 0.0;
  for (std::size_t k = 0; k < 4; ++k) acc += taps.weight[k] * (values[taps.index[k] * stride] - anchor);
  return anchor + acc;
}

std::mt19937_64 entry_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(0x5f0a)};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

void add_grating(Tensor& t, std::mt19937_64& rng, double amplitude) {
  const double theta = uniform(rng, 0.0, std::numbers::pi);
  const double period = uniform(rng, 10.0, 24.0);
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double cx = std::cos(theta), sy = std::sin(theta);
  for (std::size_t y = 0; y < t.height(); ++y) {
    for (std::size_t x = 0; x < t.width(); ++x) {
      const double u = static_cast<double>(x) * cx + static_cast<double>(y) * sy;
      t.at(y, x, 0) += amplitude * std::sin(2.0 * std::numbers::pi * u / period + phase);
    }
  }
}

void add_blobs(Tensor& t, std::mt19937_64& rng, double strength) {
  const int count = std::uniform_int_distribution<int>(1, 4)(rng);
  const double size = static_cast<double>(t.width());
  for (int b = 0; b < count; ++b) {
    const double my = uniform(rng, 0.0, size), mx = uniform(rng, 0.0, size);
    const double sigma = uniform(rng, 2.0, 6.0);
    const double amp = strength * uniform(rng, 0.2, 0.5) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
    for (std::size_t y = 0; y < t.height(); ++y) {
      for (std::size_t x = 0; x < t.width(); ++x) {
        const double dy = static_cast<double>(y) - my, dx = static_cast<double>(x) - mx;
        t.at(y, x, 0) += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      }
    }
  }
}

void fill_step_edge(Tensor& t, std::mt19937_64& rng) {
  const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double size = static_cast<double>(t.width());
  const double py = uniform(rng, 0.25 * size, 0.75 * size), px = uniform(rng, 0.25 * size, 0.75 * size);
  const double mid = uniform(rng, 0.35, 0.65), contrast = uniform(rng, 0.1, 0.3);
  const double lo = mid - contrast / 2.0, hi = mid + contrast / 2.0;
  const double nx = std::cos(theta), ny = std::sin(theta);
  for (std::size_t y = 0; y < t.height(); ++y) {
    for (std::size_t x = 0; x < t.width(); ++x) {
      const double side = (static_cast<double>(x) - px) * nx + (static_cast<double>(y) - py) * ny;
      t.at(y, x, 0) = side >= 0.0 ? hi : lo;
    }
  }
}

void fill_checkerboard(Tensor& t, std::mt19937_64& rng) {
  const auto cell = static_cast<std::size_t>(std::uniform_int_distribution<int>(6, 12)(rng));
  const auto offset = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 11)(rng));
  const double mid = uniform(rng, 0.35, 0.65), contrast = uniform(rng, 0.1, 0.3);
  const double lo = mid - contrast / 2.0, hi = mid + contrast / 2.0;
  for (std::size_t y = 0; y < t.height(); ++y) {
    for (std::size_t x = 0; x < t.width(); ++x) {
      const bool odd = (((y + offset) / cell) + ((x + offset) / cell)) % 2 == 1;
      t.at(y, x, 0) = odd ? hi : lo;
    }
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ValidationError("manifest: invalid " + what + " '" + s + "'");
  }
}

}  // namespace

double cubic_weight(double x) {
  const double a = kKeysA;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

Tensor bicubic_resample(const Tensor& t, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ValidationError("bicubic_resample: output dimensions must be >= 1");
  if (t.size() == 0) throw ValidationError("bicubic_resample: empty input");
  const std::size_t h = t.height(), w = t.width(), c = t.channels();
  const auto col_taps = axis_taps(w, out_w);
  const auto row_taps = axis_taps(h, out_h);

  Tensor horizontal({h, out_w, c});
  for (std::size_t y = 0; y < h; ++y) {
    const double* row = t.data().data() + y * w * c;
    for (std::size_t x = 0; x < out_w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) horizontal.at(y, x, ch) = interpolate(col_taps[x], row + ch, c);
    }
  }
  Tensor out({out_h, out_w, c});
  const std::size_t stride = out_w * c;
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        out.at(y, x, ch) = interpolate(row_taps[y], horizontal.data().data() + x * c + ch, stride);
      }
    }
  }
  return out;
}

Tensor augment(const Tensor& t, Augmentation choice) {
  const std::size_t h = t.height(), w = t.width(), c = t.channels();
  switch (choice) {
    case Augmentation::Rot90: {
      if (h != w) throw ValidationError("augment: rot90 requires a square patch, got " + to_string(t.shape()));
      // Counter-clockwise quarter turn.
      Tensor out(t.shape());
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t ch = 0; ch < c; ++ch) out.at(y, x, ch) = t.at(x, w - 1 - y, ch);
      return out;
    }
    case Augmentation::HorizontalFlip: {
      Tensor out(t.shape());
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t ch = 0; ch < c; ++ch) out.at(y, x, ch) = t.at(y, w - 1 - x, ch);
      return out;
    }
    case Augmentation::VerticalFlip: {
      Tensor out(t.shape());
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t ch = 0; ch < c; ++ch) out.at(y, x, ch) = t.at(h - 1 - y, x, ch);
      return out;
    }
  }
  throw ValidationError("augment: unknown augmentation");
}

Augmentation pick_augmentation(const Tensor& t, std::mt19937_64& rng) {
  if (t.height() != t.width()) {
    return std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? Augmentation::HorizontalFlip
                                                               : Augmentation::VerticalFlip;
  }
  switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
    case 0:
      return Augmentation::Rot90;
    case 1:
      return Augmentation::HorizontalFlip;
    default:
      return Augmentation::VerticalFlip;
  }
}

StatePair make_state_pair(const Tensor& hr_patch, std::size_t id) {
  if (hr_patch.height() % kScale != 0 || hr_patch.width() % kScale != 0 || hr_patch.size() == 0) {
    throw ValidationError("make_state_pair: patch " + to_string(hr_patch.shape()) + " is not divisible by " +
                          std::to_string(kScale));
  }
  const Tensor lr = bicubic_resample(hr_patch, hr_patch.height() / kScale, hr_patch.width() / kScale);
  return StatePair{bicubic_resample(lr, hr_patch.height(), hr_patch.width()), hr_patch, id};
}

Tensor synth_patch(std::size_t index, std::size_t patch_size, std::uint64_t seed) {
  auto rng = entry_rng(seed, index);
  Tensor t({patch_size, patch_size, 1});
  switch (static_cast<PatternKind>(index % 4)) {
    case PatternKind::Grating:
      std::fill(t.data().begin(), t.data().end(), uniform(rng, 0.35, 0.65));
      add_grating(t, rng, uniform(rng, 0.15, 0.35));
      break;
    case PatternKind::Blobs:
      std::fill(t.data().begin(), t.data().end(), uniform(rng, 0.3, 0.7));
      add_blobs(t, rng, 1.0);
      break;
    case PatternKind::StepEdge:
      fill_step_edge(t, rng);
      break;
    case PatternKind::Checkerboard:
      fill_checkerboard(t, rng);
      break;
  }
  // Every patch also carries a weaker grating and blobs so the families mix.
  add_grating(t, rng, uniform(rng, 0.04, 0.12));
  add_blobs(t, rng, 0.3);
  for (auto& v : t.data()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

Tensor step_edge_patch(std::size_t size, std::size_t edge_column, double low, double high) {
  Tensor t({size, size, 1});
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) t.at(y, x, 0) = x < edge_column ? low : high;
  return t;
}

SynthDataset synth_dataset(const SynthOptions& options) {
  if (options.count == 0) throw ValidationError("empty dataset requested");
  if (options.patch_size == 0 || options.patch_size % kScale != 0) {
    throw ValidationError("patch_size " + std::to_string(options.patch_size) + " is not divisible by " +
                          std::to_string(kScale));
  }
  if (!(options.train_fraction > 0.0 && options.train_fraction <= 1.0)) {
    throw ValidationError("train_fraction must lie in (0, 1]");
  }
  SynthDataset ds;
  for (std::size_t i = 0; i < options.count; ++i) ds.patches.push_back(synth_patch(i, options.patch_size, options.seed));

  const auto n_train = static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(options.count)));
  std::vector<std::size_t> order(options.count);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng = entry_rng(options.seed, options.count);
  std::shuffle(order.begin(), order.end(), rng);
  ds.split.assign(options.count, "test");
  for (std::size_t i = 0; i < n_train; ++i) ds.split[order[i]] = "train";
  return ds;
}

DatasetManifest write_synth_dataset(const std::filesystem::path& dir, const SynthOptions& options) {
  const SynthDataset ds = synth_dataset(options);
  std::error_code ec;
  std::filesystem::create_directories(dir / "patches", ec);
  if (ec) throw IoError("cannot create " + (dir / "patches").string() + ": " + ec.message());
  DatasetManifest manifest;
  manifest.patch_size = options.patch_size;
  for (std::size_t i = 0; i < ds.patches.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "patch_%05zu.pgm", i);
    const std::string rel = std::string("patches/") + name;
    save_image(from_tensor(ds.patches[i]), dir / rel);
    manifest.entries.push_back({rel, 0, 0, ds.split[i]});
  }
  write_manifest(dir / "manifest.csv", manifest);
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "path,origin_x,origin_y,split\n";
  for (const auto& e : manifest.entries) out << e.path << ',' << e.origin_x << ',' << e.origin_y << ',' << e.split << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path, std::size_t patch_size) {
  if (patch_size == 0 || patch_size % kScale != 0) {
    throw ValidationError("patch_size " + std::to_string(patch_size) + " is not divisible by " +
                          std::to_string(kScale));
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest manifest;
  manifest.patch_size = patch_size;
  std::string line;
  if (!std::getline(in, line) || line != "path,origin_x,origin_y,split") {
    throw ValidationError(path.string() + ": missing manifest header 'path,origin_x,origin_y,split'");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) throw ValidationError(path.string() + ": malformed manifest row '" + line + "'");
    if (fields[3] != "train" && fields[3] != "test") {
      throw ValidationError(path.string() + ": unknown split '" + fields[3] + "'");
    }
    manifest.entries.push_back({fields[0], parse_count(fields[1], "origin_x"), parse_count(fields[2], "origin_y"), fields[3]});
  }
  return manifest;
}

std::vector<StatePair> load_split(const std::filesystem::path& manifest_path, std::size_t patch_size,
                                  const std::string& split) {
  const DatasetManifest manifest = read_manifest(manifest_path, patch_size);
  const auto base = manifest_path.parent_path();
  std::vector<StatePair> pairs;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (split != "all" && e.split != split) continue;
    const Tensor image = to_tensor(load_image(base / e.path));
    if (e.origin_y + patch_size > image.height() || e.origin_x + patch_size > image.width()) {
      throw ValidationError(e.path + ": patch at (" + std::to_string(e.origin_x) + "," + std::to_string(e.origin_y) +
                            ") exceeds image bounds");
    }
    Tensor patch({patch_size, patch_size, image.channels()});
    for (std::size_t y = 0; y < patch_size; ++y)
      for (std::size_t x = 0; x < patch_size; ++x)
        for (std::size_t c = 0; c < image.channels(); ++c)
          patch.at(y, x, c) = image.at(e.origin_y + y, e.origin_x + x, c);
    pairs.push_back(make_state_pair(patch, i));
  }
  return pairs;
}

}  // namespace spoa
