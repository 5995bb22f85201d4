#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spoa {

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

// 64-byte aligned storage. Eigen picks its vectorized summation order from
// each pointer's alignment, so a fixed alignment keeps results independent of
// heap state.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

/// Dense H x W x C array of doubles, channel-fastest row-major layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * shape_.width + x) * shape_.channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * shape_.width + x) * shape_.channels + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  AlignedVector data_;
};

/// Convolution weights laid out (kh, kw, in, out) row-major, so the weights
/// form a (kh*kw*in) x out matrix; one bias per output channel.
struct Kernel {
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  AlignedVector weights;
  AlignedVector bias;

  Kernel() = default;
  Kernel(std::size_t kh, std::size_t kw, std::size_t in_channels, std::size_t out_channels);

  double& w(std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) {
    return weights[((ky * kw + kx) * in_channels + ci) * out_channels + co];
  }
  double w(std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) const {
    return weights[((ky * kw + kx) * in_channels + ci) * out_channels + co];
  }

  friend bool operator==(const Kernel&, const Kernel&) = default;
};

// Throws NumericError naming `what` if any value is NaN or Inf.
void check_finite(std::span<const double> values, std::string_view what);
inline void check_finite(const Tensor& t, std::string_view what) { check_finite(t.data(), what); }

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what);

// ---- primitives -----------------------------------------------------------

/// Zero-padded "same" 2-D convolution (cross-correlation) plus bias.
Tensor conv2d(const Tensor& input, const Kernel& kernel);

/// Gradients of conv2d. `grad_input` may be null when the input gradient is
/// not needed; `grad_kernel` may be null for a frozen kernel. Both accumulate.
void conv2d_backward(const Tensor& input, const Kernel& kernel, const Tensor& grad_output,
                     Tensor* grad_input, Kernel* grad_kernel);

Tensor leaky_relu(const Tensor& input, double slope);
double leaky_relu(double x, double slope);

double sigmoid(double x);
/// log(sigmoid(x)) without forming sigmoid(x) first.
double log_sigmoid(double x);

/// Mean of elementwise products.
double inner_product(const Tensor& a, const Tensor& b);

// ---- elementwise helpers --------------------------------------------------

Tensor add_scaled(const Tensor& x, const Tensor& h, double lambda);  // x + lambda*h
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor clamp01(const Tensor& t);
double mean_squared_error(const Tensor& a, const Tensor& b);

}  // namespace spoa
