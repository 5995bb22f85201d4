#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "spoa/state.hpp"
#include "spoa/tensor.hpp"

namespace spoa {

inline constexpr std::size_t kScale = 4;

/// Separable cubic convolution (Keys, a = -0.5) with edge-clamped taps and
/// pixel-center alignment. No prefilter: downsampling uses the plain kernel.
Tensor bicubic_resample(const Tensor& t, std::size_t out_h, std::size_t out_w);

/// Keys cubic kernel weight at offset x.
double cubic_weight(double x);

enum class Augmentation { Rot90, HorizontalFlip, VerticalFlip };

Tensor augment(const Tensor& t, Augmentation choice);
/// One technique chosen uniformly; rot90 is excluded for non-square tensors.
Augmentation pick_augmentation(const Tensor& t, std::mt19937_64& rng);

/// s* = hr; s0 = bicubic(bicubic(hr, H/4, W/4), H, W).
StatePair make_state_pair(const Tensor& hr_patch, std::size_t id = 0);

// ---- synthetic data --------------------------------------------------------

enum class PatternKind { Grating, Blobs, StepEdge, Checkerboard };

/// One procedurally generated single-channel patch in [0, 1].
Tensor synth_patch(std::size_t index, std::size_t patch_size, std::uint64_t seed);
/// Vertical step edge: columns < edge_column take `low`, the rest `high`.
Tensor step_edge_patch(std::size_t size, std::size_t edge_column, double low, double high);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::size_t origin_x = 0;
  std::size_t origin_y = 0;
  std::string split;  // "train" or "test"
};

struct DatasetManifest {
  std::size_t patch_size = 64;
  std::size_t scale = kScale;
  std::vector<ManifestEntry> entries;
};

struct SynthOptions {
  std::size_t count = 200;
  std::size_t patch_size = 32;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
};

/// In-memory synthetic dataset: HR patches with their split labels.
struct SynthDataset {
  std::vector<Tensor> patches;
  std::vector<std::string> split;
};

SynthDataset synth_dataset(const SynthOptions& options);

/// Writes patches/patch_NNNN.pgm and manifest.csv under `dir`.
DatasetManifest write_synth_dataset(const std::filesystem::path& dir, const SynthOptions& options);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// `patch_size` is not stored in the CSV and comes from the caller.
DatasetManifest read_manifest(const std::filesystem::path& path, std::size_t patch_size);

/// Loads the entries of `split` ("train", "test" or "all") as state pairs.
std::vector<StatePair> load_split(const std::filesystem::path& manifest_path, std::size_t patch_size,
                                  const std::string& split);

}  // namespace spoa
