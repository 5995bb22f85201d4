#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "spoa/networks.hpp"
#include "spoa/state.hpp"
#include "spoa/tensor.hpp"

namespace spoa {

// Full-reference distortion metrics on [0, 1] images. Zero error yields
// +infinity for the dB metrics.

/// 10*log10(peak^2 / MSE) after clamping both inputs to [0, 1].
double psnr(const Tensor& x, const Tensor& y, double peak = 1.0);

/// Mean local SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 1, valid window positions only, channels averaged.
double ssim(const Tensor& x, const Tensor& y);

/// Signal-to-reconstruction error, 10*log10(mean(ref)^2 / MSE) per channel, averaged.
double sre(const Tensor& reference, const Tensor& estimate);

struct SamResult {
  double degrees = 0.0;
  std::size_t skipped = 0;  // pixels with a near-zero spectral vector
};

/// Mean per-pixel spectral angle in degrees.
SamResult sam_detail(const Tensor& x, const Tensor& y);
inline double sam(const Tensor& x, const Tensor& y) { return sam_detail(x, y).degrees; }

struct ImageMetrics {
  std::size_t image_id = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double sre_db = 0.0;
  double sam_deg = 0.0;  // NaN when every estimate pixel is zero
};

struct MetricReport {
  std::string method;
  std::vector<ImageMetrics> images;
  // Means over images with finite PSNR.
  double psnr_db = 0.0;
  double ssim = 0.0;
  double sre_db = 0.0;
  double sam_deg = 0.0;
  std::size_t infinite_psnr_count = 0;
};

MetricReport summarize(std::string method, std::vector<ImageMetrics> images);
ImageMetrics score_image(std::size_t image_id, const Tensor& estimate, const Tensor& reference);

struct SplitEvaluation {
  MetricReport spoa;
  MetricReport bicubic;
};

/// Runs the actor on each s0 (clamped to [0, 1]) and scores it against s*;
/// s0 itself is the bicubic baseline.
SplitEvaluation evaluate_split(const ParameterSet& params, const std::vector<StatePair>& test_pairs,
                               const NetworkConfig& net, std::size_t threads = 0);

/// CSV `image_id,method,psnr_db,ssim,sre_db,sam_deg` with one summary row
/// (image_id "mean") per method.
std::string report_csv(const std::vector<MetricReport>& reports);
void write_report(const std::filesystem::path& path, const std::vector<MetricReport>& reports);

}  // namespace spoa
