#pragma once

#include <cassert>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace l3u {

/// Precondition violated because a dimension is not divisible by the
/// required factor (fold/unfold/fold_kernel). The message names the axis.
struct DivisibilityError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Shape mismatch or an unsatisfiable output geometry.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 0, i8 = 1, i32 = 2 };

template <typename T>
struct dtype_of;
template <>
struct dtype_of<float> {
  static constexpr DType value = DType::f32;
};
template <>
struct dtype_of<std::int8_t> {
  static constexpr DType value = DType::i8;
};
template <>
struct dtype_of<std::int32_t> {
  static constexpr DType value = DType::i32;
};

struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// Dense CHW tensor: channel-major, row-major within a channel.
/// Immutable by convention once filled; all ops return new tensors.
/// H and W are always >= 1. C may be 0 only for the degenerate in-memory
/// case (channel concat identity); serialization requires C >= 1.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(int channels, int height, int width, T fill = T{})
      : channels_(channels),
        height_(height),
        width_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {
    if (channels < 0 || height < 1 || width < 1) {
      throw ShapeError("tensor dims must satisfy C >= 0, H >= 1, W >= 1, got " +
                       to_string(Shape{channels, height, width}));
    }
  }

  static Tensor from_data(int channels, int height, int width, std::vector<T> elements) {
    Tensor t(channels, height, width);
    if (elements.size() != t.data_.size()) {
      throw ShapeError("element count " + std::to_string(elements.size()) +
                       " does not match shape " + to_string(t.shape()));
    }
    t.data_ = std::move(elements);
    return t;
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  Shape shape() const { return {channels_, height_, width_}; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  T& at(int c, int y, int x) {
    assert(c >= 0 && c < channels_ && y >= 0 && y < height_ && x >= 0 && x < width_);
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  const T& at(int c, int y, int x) const {
    assert(c >= 0 && c < channels_ && y >= 0 && y < height_ && x >= 0 && x < width_);
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  bool operator==(const Tensor&) const = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorI8 = Tensor<std::int8_t>;
using TensorI32 = Tensor<std::int32_t>;

/// Folding factor for the space-to-depth transform. Channel ordering is
/// fixed: folded index f = (dh*alpha + dw)*C + c (offset-major, source
/// channel minor), so the (0,0) offset block comes first, then (0,1), ...
struct FoldSpec {
  int alpha = 1;
};

/// Convolution weights in (out, in, row, col) order plus a per-output bias.
/// Quantized kernels carry int8 weights and an int32 bias in the
/// accumulator domain.
template <typename W>
struct Kernel4D {
  using BiasT = std::conditional_t<std::is_same_v<W, std::int8_t>, std::int32_t, W>;

  int out_channels = 0;
  int in_channels = 0;
  int kh = 0;
  int kw = 0;
  std::vector<W> weights;    // out*in*kh*kw
  std::vector<BiasT> bias;   // out

  static Kernel4D zeros(int out_c, int in_c, int kh_, int kw_) {
    Kernel4D k;
    k.out_channels = out_c;
    k.in_channels = in_c;
    k.kh = kh_;
    k.kw = kw_;
    k.weights.assign(static_cast<std::size_t>(out_c) * in_c * kh_ * kw_, W{});
    k.bias.assign(static_cast<std::size_t>(out_c), BiasT{});
    return k;
  }

  W& at(int o, int i, int p, int q) {
    assert(o < out_channels && i < in_channels && p < kh && q < kw);
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kh + p) * kw + q];
  }
  const W& at(int o, int i, int p, int q) const {
    assert(o < out_channels && i < in_channels && p < kh && q < kw);
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kh + p) * kw + q];
  }

  bool operator==(const Kernel4D&) const = default;
};

using KernelF = Kernel4D<float>;
using KernelQ = Kernel4D<std::int8_t>;

namespace detail {
inline void check_alpha(int alpha) {
  if (alpha < 1) {
    throw std::invalid_argument("folding factor alpha must be >= 1, got " + std::to_string(alpha));
  }
}
}  // namespace detail

/// Space-to-depth: (C, H, W) -> (alpha^2*C, H/alpha, W/alpha) with
/// y[(dh*a + dw)*C + c, i, j] = x[c, i*a + dh, j*a + dw].
template <typename T>
Tensor<T> fold(const Tensor<T>& x, const FoldSpec& spec) {
  detail::check_alpha(spec.alpha);
  const int a = spec.alpha;
  if (a == 1) return x;
  if (x.height() % a != 0) {
    throw DivisibilityError("fold: height " + std::to_string(x.height()) +
                            " not divisible by alpha " + std::to_string(a));
  }
  if (x.width() % a != 0) {
    throw DivisibilityError("fold: width " + std::to_string(x.width()) +
                            " not divisible by alpha " + std::to_string(a));
  }
  const int ci = x.channels();
  const int ho = x.height() / a;
  const int wo = x.width() / a;
  Tensor<T> y(a * a * ci, ho, wo);
  for (int dh = 0; dh < a; ++dh) {
    for (int dw = 0; dw < a; ++dw) {
      for (int c = 0; c < ci; ++c) {
        const int yc = (dh * a + dw) * ci + c;
        for (int i = 0; i < ho; ++i) {
          for (int j = 0; j < wo; ++j) {
            y.at(yc, i, j) = x.at(c, i * a + dh, j * a + dw);
          }
        }
      }
    }
  }
  return y;
}

/// Exact inverse of fold.
template <typename T>
Tensor<T> unfold(const Tensor<T>& y, const FoldSpec& spec) {
  detail::check_alpha(spec.alpha);
  const int a = spec.alpha;
  if (a == 1) return y;
  const int aa = a * a;
  if (y.channels() % aa != 0) {
    throw DivisibilityError("unfold: channel count " + std::to_string(y.channels()) +
                            " not divisible by alpha^2 = " + std::to_string(aa));
  }
  const int co = y.channels() / aa;
  Tensor<T> x(co, y.height() * a, y.width() * a);
  for (int dh = 0; dh < a; ++dh) {
    for (int dw = 0; dw < a; ++dw) {
      for (int c = 0; c < co; ++c) {
        const int yc = (dh * a + dw) * co + c;
        for (int i = 0; i < y.height(); ++i) {
          for (int j = 0; j < y.width(); ++j) {
            x.at(c, i * a + dh, j * a + dw) = y.at(yc, i, j);
          }
        }
      }
    }
  }
  return x;
}

/// Rearranges a kernel so that convolving folded data with it reproduces the
/// original convolution: (out, in, a*k, a*k) -> (out, a^2*in, k, k) with
/// w'[o, (dh*a + dw)*in + c, p, q] = w[o, c, p*a + dh, q*a + dw]. Bias is
/// unchanged.
template <typename W>
Kernel4D<W> fold_kernel(const Kernel4D<W>& w, const FoldSpec& spec) {
  detail::check_alpha(spec.alpha);
  const int a = spec.alpha;
  if (a == 1) return w;
  if (w.kh % a != 0) {
    throw DivisibilityError("fold_kernel: kernel height " + std::to_string(w.kh) +
                            " not divisible by alpha " + std::to_string(a));
  }
  if (w.kw % a != 0) {
    throw DivisibilityError("fold_kernel: kernel width " + std::to_string(w.kw) +
                            " not divisible by alpha " + std::to_string(a));
  }
  Kernel4D<W> r = Kernel4D<W>::zeros(w.out_channels, a * a * w.in_channels, w.kh / a, w.kw / a);
  r.bias = w.bias;
  for (int o = 0; o < w.out_channels; ++o) {
    for (int dh = 0; dh < a; ++dh) {
      for (int dw = 0; dw < a; ++dw) {
        for (int c = 0; c < w.in_channels; ++c) {
          const int rc = (dh * a + dw) * w.in_channels + c;
          for (int p = 0; p < r.kh; ++p) {
            for (int q = 0; q < r.kw; ++q) {
              r.at(o, rc, p, q) = w.at(o, c, p * a + dh, q * a + dw);
            }
          }
        }
      }
    }
  }
  return r;
}

// --- L3UT binary serialization ---
// magic "L3UT", version byte (1), mode byte (0=float32, 1=int8, 2=int32),
// u32 LE dims C,H,W, then raw little-endian element data.

using AnyTensor = std::variant<TensorF, TensorI8, TensorI32>;

DType dtype(const AnyTensor& t);
Shape shape(const AnyTensor& t);

void write_tensor(std::ostream& os, const AnyTensor& t);
void write_tensor(const std::filesystem::path& path, const AnyTensor& t);
AnyTensor read_tensor(std::istream& is);
AnyTensor read_tensor(const std::filesystem::path& path);

}  // namespace l3u
