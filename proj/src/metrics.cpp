#include "spoa/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

#include "spoa/errors.hpp"
#include "spoa/parallel.hpp"

namespace spoa {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> g{};
  double sum = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(kWindow / 2);
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Valid-region separable Gaussian filter of one channel plane (row-major h x w).
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w) {
  static const auto g = gaussian_taps();
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * plane[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

std::vector<double> channel_plane(const Tensor& t, std::size_t c) {
  std::vector<double> plane(t.height() * t.width());
  for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = t[i * t.channels() + c];
  return plane;
}

std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

double psnr(const Tensor& x, const Tensor& y, double peak) {
  require_same_shape(x, y, "psnr");
  const double mse = mean_squared_error(clamp01(x), clamp01(y));
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "ssim");
  const std::size_t h = x.height(), w = x.width();
  if (h < kWindow || w < kWindow) {
    throw ValidationError("ssim: image " + to_string(x.shape()) + " is smaller than the 11x11 window");
  }
  double total = 0.0;
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const auto px = channel_plane(x, c);
    const auto py = channel_plane(y, c);
    std::vector<double> pxx(px.size()), pyy(px.size()), pxy(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      pxx[i] = px[i] * px[i];
      pyy[i] = py[i] * py[i];
      pxy[i] = px[i] * py[i];
    }
    const auto mx = filter_valid(px, h, w), my = filter_valid(py, h, w);
    const auto sxx = filter_valid(pxx, h, w), syy = filter_valid(pyy, h, w), sxy = filter_valid(pxy, h, w);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double var_x = sxx[i] - mx[i] * mx[i];
      const double var_y = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      sum += ((2.0 * mx[i] * my[i] + kC1) * (2.0 * cov + kC2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (var_x + var_y + kC2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(x.channels());
}

double sre(const Tensor& reference, const Tensor& estimate) {
  require_same_shape(reference, estimate, "sre");
  const std::size_t channels = reference.channels();
  const std::size_t pixels = reference.height() * reference.width();
  if (pixels == 0) throw ValidationError("sre: empty image");
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0, mse = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double r = reference[p * channels + c];
      const double d = r - estimate[p * channels + c];
      mean += r;
      mse += d * d;
    }
    mean /= static_cast<double>(pixels);
    mse /= static_cast<double>(pixels);
    if (mean == 0.0) throw ValidationError("sre: zero-mean reference");
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    total += 10.0 * std::log10(mean * mean / mse);
  }
  return total / static_cast<double>(channels);
}

namespace {

// Mean angle in degrees over non-degenerate pixels; `counted` may be zero.
SamResult angle_sum(const Tensor& x, const Tensor& y, std::size_t& counted) {
  const std::size_t c = x.channels();
  const std::size_t pixels = x.height() * x.width();
  SamResult result;
  double sum = 0.0;
  counted = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    double nx = 0.0, ny = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      nx += x[p * c + k] * x[p * c + k];
      ny += y[p * c + k] * y[p * c + k];
    }
    nx = std::sqrt(nx);
    ny = std::sqrt(ny);
    if (nx < 1e-12 || ny < 1e-12) {
      ++result.skipped;
      continue;
    }
    // Angle between unit vectors as 2*atan2(|u - v|, |u + v|); exact for u == v.
    double diff = 0.0, plus = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double a = x[p * c + k] / nx, b = y[p * c + k] / ny;
      diff += (a - b) * (a - b);
      plus += (a + b) * (a + b);
    }
    sum += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(plus));
    ++counted;
  }
  if (counted > 0) result.degrees = sum / static_cast<double>(counted) * 180.0 / std::numbers::pi;
  return result;
}

}  // namespace

SamResult sam_detail(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "sam");
  if (x.channels() == 0) throw ValidationError("sam: no channels");
  std::size_t counted = 0;
  SamResult result = angle_sum(x, y, counted);
  if (counted == 0) throw ValidationError("sam: every pixel has a degenerate spectral vector");
  return result;
}

ImageMetrics score_image(std::size_t image_id, const Tensor& estimate, const Tensor& reference) {
  ImageMetrics m;
  m.image_id = image_id;
  m.psnr_db = psnr(estimate, reference);
  m.ssim = ssim(estimate, reference);
  m.sre_db = sre(reference, estimate);
  require_same_shape(estimate, reference, "sam");
  std::size_t counted = 0;
  const SamResult angle = angle_sum(estimate, reference, counted);
  // An all-black estimate has no spectral direction anywhere.
  m.sam_deg = counted > 0 ? angle.degrees : std::numeric_limits<double>::quiet_NaN();
  return m;
}

MetricReport summarize(std::string method, std::vector<ImageMetrics> images) {
  MetricReport report;
  report.method = std::move(method);
  report.images = std::move(images);
  std::size_t finite = 0, with_angle = 0;
  for (const auto& m : report.images) {
    if (std::isinf(m.psnr_db)) {
      ++report.infinite_psnr_count;
      continue;
    }
    report.psnr_db += m.psnr_db;
    report.ssim += m.ssim;
    report.sre_db += m.sre_db;
    if (!std::isnan(m.sam_deg)) {
      report.sam_deg += m.sam_deg;
      ++with_angle;
    }
    ++finite;
  }
  if (finite > 0) {
    const double n = static_cast<double>(finite);
    report.psnr_db /= n;
    report.ssim /= n;
    report.sre_db /= n;
    report.sam_deg = with_angle > 0 ? report.sam_deg / static_cast<double>(with_angle)
                                    : std::numeric_limits<double>::quiet_NaN();
  } else {
    report.psnr_db = report.sre_db = std::numeric_limits<double>::infinity();
    report.ssim = 1.0;
    report.sam_deg = 0.0;
  }
  return report;
}

SplitEvaluation evaluate_split(const ParameterSet& params, const std::vector<StatePair>& test_pairs,
                               const NetworkConfig& net, std::size_t threads) {
  if (test_pairs.empty()) throw ValidationError("evaluate_split: empty test set");
  std::vector<ImageMetrics> model(test_pairs.size()), baseline(test_pairs.size());
  parallel_for(test_pairs.size(), threads, [&](std::size_t i) {
    const StatePair& pair = test_pairs[i];
    const Tensor s_hat = clamp01(actor_forward(pair.s0, params, net).arrived_state());
    model[i] = score_image(pair.id, s_hat, pair.s_star);
    baseline[i] = score_image(pair.id, clamp01(pair.s0), pair.s_star);
  });
  return {summarize("spoa", std::move(model)), summarize("bicubic", std::move(baseline))};
}

std::string report_csv(const std::vector<MetricReport>& reports) {
  std::string out = "image_id,method,psnr_db,ssim,sre_db,sam_deg\n";
  auto row = [&](const std::string& id, const std::string& method, double p, double s, double r, double a) {
    out += id + "," + method + "," + format_value(p) + "," + format_value(s) + "," + format_value(r) + "," +
           format_value(a) + "\n";
  };
  for (const auto& report : reports) {
    for (const auto& m : report.images) {
      row(std::to_string(m.image_id), report.method, m.psnr_db, m.ssim, m.sre_db, m.sam_deg);
    }
    row("mean", report.method, report.psnr_db, report.ssim, report.sre_db, report.sam_deg);
  }
  return out;
}

void write_report(const std::filesystem::path& path, const std::vector<MetricReport>& reports) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << report_csv(reports);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace spoa
