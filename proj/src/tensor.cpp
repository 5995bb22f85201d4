#include "spoa/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "spoa/errors.hpp"

namespace spoa {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

// Builds the (H*W) x (kh*kw*C) patch matrix with zero padding.
void im2col(const Tensor& input, const Kernel& kernel, AlignedVector& cols) {
  const std::size_t h = input.height(), w = input.width(), c = input.channels();
  const std::size_t row_len = kernel.kh * kernel.kw * c;
  const auto pad_y = static_cast<std::ptrdiff_t>(kernel.kh / 2);
  const auto pad_x = static_cast<std::ptrdiff_t>(kernel.kw / 2);
  cols.resize(h * w * row_len);
  const double* src = input.data().data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double* row = cols.data() + (y * w + x) * row_len;
      for (std::size_t ky = 0; ky < kernel.kh; ++ky) {
        const auto sy = static_cast<std::ptrdiff_t>(y + ky) - pad_y;
        double* dst = row + ky * kernel.kw * c;
        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
          std::fill(dst, dst + kernel.kw * c, 0.0);
          continue;
        }
        for (std::size_t kx = 0; kx < kernel.kw; ++kx) {
          const auto sx = static_cast<std::ptrdiff_t>(x + kx) - pad_x;
          if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) {
            std::fill(dst + kx * c, dst + (kx + 1) * c, 0.0);
            continue;
          }
          const double* px = src + (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * c;
          std::copy(px, px + c, dst + kx * c);
        }
      }
    }
  }
}

// Scatter-adds a patch matrix back into image layout (adjoint of im2col).
void col2im_add(const AlignedVector& cols, const Kernel& kernel, Tensor& out) {
  const std::size_t h = out.height(), w = out.width(), c = out.channels();
  const std::size_t row_len = kernel.kh * kernel.kw * c;
  const auto pad_y = static_cast<std::ptrdiff_t>(kernel.kh / 2);
  const auto pad_x = static_cast<std::ptrdiff_t>(kernel.kw / 2);
  double* dst = out.data().data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double* row = cols.data() + (y * w + x) * row_len;
      for (std::size_t ky = 0; ky < kernel.kh; ++ky) {
        const auto sy = static_cast<std::ptrdiff_t>(y + ky) - pad_y;
        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kernel.kw; ++kx) {
          const auto sx = static_cast<std::ptrdiff_t>(x + kx) - pad_x;
          if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
          double* px = dst + (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * c;
          const double* seg = row + (ky * kernel.kw + kx) * c;
          for (std::size_t ci = 0; ci < c; ++ci) px[ci] += seg[ci];
        }
      }
    }
  }
}

void validate_conv(const Tensor& input, const Kernel& kernel) {
  if (kernel.kh % 2 == 0 || kernel.kw % 2 == 0) {
    throw ValidationError("conv2d: kernel dimensions must be odd, got " + std::to_string(kernel.kh) + "x" +
                          std::to_string(kernel.kw));
  }
  if (kernel.in_channels != input.channels()) {
    throw ValidationError("conv2d: kernel expects " + std::to_string(kernel.in_channels) +
                          " input channels, tensor has " + std::to_string(input.channels()));
  }
}

}  // namespace

std::string to_string(const Shape& shape) {
  return std::to_string(shape.height) + "x" + std::to_string(shape.width) + "x" + std::to_string(shape.channels);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(data.begin(), data.end()) {
  if (data_.size() != shape_.size()) {
    throw ValidationError("tensor of shape " + to_string(shape_) + " needs " + std::to_string(shape_.size()) +
                          " values, got " + std::to_string(data_.size()));
  }
}

Kernel::Kernel(std::size_t kh_, std::size_t kw_, std::size_t in, std::size_t out)
    : kh(kh_), kw(kw_), in_channels(in), out_channels(out), weights(kh_ * kw_ * in * out, 0.0), bias(out, 0.0) {
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ValidationError("kernel dimensions must be odd, got " + std::to_string(kh) + "x" + std::to_string(kw));
  }
}

void check_finite(std::span<const double> values, std::string_view what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in " + std::string(what));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                          to_string(b.shape()));
  }
}

Tensor conv2d(const Tensor& input, const Kernel& kernel) {
  validate_conv(input, kernel);
  const std::size_t pixels = input.height() * input.width();
  const std::size_t row_len = kernel.kh * kernel.kw * kernel.in_channels;
  Tensor out({input.height(), input.width(), kernel.out_channels});

  ConstRowMap weights(kernel.weights.data(), static_cast<Eigen::Index>(row_len),
                      static_cast<Eigen::Index>(kernel.out_channels));
  RowMap result(out.data().data(), static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(kernel.out_channels));
  if (kernel.kh == 1 && kernel.kw == 1) {
    ConstRowMap cols(input.data().data(), static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(row_len));
    result.noalias() = cols * weights;
  } else {
    thread_local AlignedVector buffer;
    im2col(input, kernel, buffer);
    ConstRowMap cols(buffer.data(), static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(row_len));
    result.noalias() = cols * weights;
  }
  Eigen::Map<const Eigen::RowVectorXd> bias(kernel.bias.data(), static_cast<Eigen::Index>(kernel.out_channels));
  result.rowwise() += bias;
  check_finite(out, "conv2d output");
  return out;
}

void conv2d_backward(const Tensor& input, const Kernel& kernel, const Tensor& grad_output, Tensor* grad_input,
                     Kernel* grad_kernel) {
  validate_conv(input, kernel);
  const Shape expected{input.height(), input.width(), kernel.out_channels};
  if (grad_output.shape() != expected) {
    throw ValidationError("conv2d_backward: upstream gradient has shape " + to_string(grad_output.shape()) +
                          ", expected " + to_string(expected));
  }
  const auto pixels = static_cast<Eigen::Index>(input.height() * input.width());
  const auto row_len = static_cast<Eigen::Index>(kernel.kh * kernel.kw * kernel.in_channels);
  const auto outs = static_cast<Eigen::Index>(kernel.out_channels);
  ConstRowMap upstream(grad_output.data().data(), pixels, outs);
  const bool pointwise = kernel.kh == 1 && kernel.kw == 1;

  thread_local AlignedVector buffer;
  if (grad_kernel != nullptr) {
    if (grad_kernel->weights.size() != kernel.weights.size() || grad_kernel->bias.size() != kernel.bias.size()) {
      throw ValidationError("conv2d_backward: gradient kernel layout mismatch");
    }
    const double* cols_data = input.data().data();
    if (!pointwise) {
      im2col(input, kernel, buffer);
      cols_data = buffer.data();
    }
    ConstRowMap cols(cols_data, pixels, row_len);
    RowMap grad_w(grad_kernel->weights.data(), row_len, outs);
    grad_w.noalias() += cols.transpose() * upstream;
    Eigen::Map<Eigen::RowVectorXd> grad_b(grad_kernel->bias.data(), outs);
    grad_b += upstream.colwise().sum();
  }
  if (grad_input != nullptr) {
    require_same_shape(*grad_input, input, "conv2d_backward input gradient");
    ConstRowMap weights(kernel.weights.data(), row_len, outs);
    if (pointwise) {
      RowMap grad_in(grad_input->data().data(), pixels, row_len);
      grad_in.noalias() += upstream * weights.transpose();
    } else {
      buffer.resize(static_cast<std::size_t>(pixels * row_len));
      RowMap grad_cols(buffer.data(), pixels, row_len);
      grad_cols.noalias() = upstream * weights.transpose();
      col2im_add(buffer, kernel, *grad_input);
    }
  }
}

double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

Tensor leaky_relu(const Tensor& input, double slope) {
  if (!(slope >= 0.0)) throw ValidationError("leaky_relu: slope must be non-negative");
  Tensor out(input.shape());
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = leaky_relu(src[i], slope);
  check_finite(out, "leaky_relu output");
  return out;
}

double sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  // Keep the open interval even where the true value rounds to 0 or 1.
  return std::clamp(s, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double inner_product(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "inner_product");
  if (a.size() == 0) throw ValidationError("inner_product: empty tensors");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum / static_cast<double>(a.size());
}

Tensor add_scaled(const Tensor& x, const Tensor& h, double lambda) {
  require_same_shape(x, h, "add_scaled");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + lambda * h[i];
  check_finite(out, "add_scaled output");
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor clamp01(const Tensor& t) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::clamp(t[i], 0.0, 1.0);
  return out;
}

double mean_squared_error(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mean_squared_error");
  if (a.size() == 0) throw ValidationError("mean_squared_error: empty tensors");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace spoa
