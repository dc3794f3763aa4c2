#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "l3u/tensor.hpp"

namespace l3u {

enum class LayerKind { conv2d, conv_transpose2d, maxpool2x2, concat, fold, unfold };

enum class Activation { none, relu };

std::string_view to_string(LayerKind k);

/// Per-channel batch normalization statistics to be folded into the host
/// convolution. Arrays share the conv's output channel count.
struct BatchNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-5f;
};

/// 8-bit signed Q7 weight quantization: scale 2^7, round half away from
/// zero, saturate weights to [-128, 127]. Bias maps into the int32
/// accumulator domain at the same scale, without int8 clamping.
struct QuantSpec {
  int weight_bits = 8;
  int weight_scale = 128;
  int activation_bits = 8;
  int accumulator_bits = 32;
};

// --- arithmetic helpers (quantized pipeline contract) ---

inline std::int8_t saturate_i8(std::int64_t v) {
  return static_cast<std::int8_t>(std::clamp<std::int64_t>(v, -128, 127));
}

/// Arithmetic shift by output_shift with round-half-away-from-zero, then
/// saturation to [-128, 127]. Negative shifts scale up.
inline std::int8_t requantize(std::int32_t acc, int output_shift) {
  std::int64_t v = acc;
  if (output_shift > 0) {
    const std::int64_t half = std::int64_t{1} << (output_shift - 1);
    v = v >= 0 ? (v + half) >> output_shift : -((-v + half) >> output_shift);
  } else if (output_shift < 0) {
    v <<= -output_shift;
  }
  return saturate_i8(v);
}

// --- forward operations ---

TensorF conv2d_forward(const TensorF& x, const KernelF& w, int stride, int padding,
                       Activation activation);

/// Raw int32 accumulator map of the quantized convolution (bias included,
/// no shift, no saturation, no activation). This is the integer-exact route
/// the folding equivalence is stated in.
TensorI32 conv2d_accumulate(const TensorI8& x, const KernelQ& w, int stride, int padding);

TensorI8 conv2d_forward(const TensorI8& x, const KernelQ& w, int stride, int padding,
                        Activation activation, int output_shift);

TensorF convtranspose2d_forward(const TensorF& x, const KernelF& w, int stride, int padding,
                                int output_padding, Activation activation);

TensorI32 convtranspose2d_accumulate(const TensorI8& x, const KernelQ& w, int stride, int padding,
                                     int output_padding);

TensorI8 convtranspose2d_forward(const TensorI8& x, const KernelQ& w, int stride, int padding,
                                 int output_padding, Activation activation, int output_shift);

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x) {
  if (x.height() % 2 != 0) {
    throw ShapeError("maxpool2x2: height " + std::to_string(x.height()) + " is odd");
  }
  if (x.width() % 2 != 0) {
    throw ShapeError("maxpool2x2: width " + std::to_string(x.width()) + " is odd");
  }
  Tensor<T> y(x.channels(), x.height() / 2, x.width() / 2);
  for (int c = 0; c < x.channels(); ++c) {
    for (int i = 0; i < y.height(); ++i) {
      for (int j = 0; j < y.width(); ++j) {
        const T a = x.at(c, 2 * i, 2 * j);
        const T b = x.at(c, 2 * i, 2 * j + 1);
        const T d = x.at(c, 2 * i + 1, 2 * j);
        const T e = x.at(c, 2 * i + 1, 2 * j + 1);
        y.at(c, i, j) = std::max(std::max(a, b), std::max(d, e));
      }
    }
  }
  return y;
}

/// Channel-wise concatenation, a's channels first.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat: spatial mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  Tensor<T> y(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.data().begin(), a.data().end(), y.data().begin());
  std::copy(b.data().begin(), b.data().end(), y.data().begin() + a.data().size());
  return y;
}

/// Folds BatchNorm into the conv: w' = w * g/sqrt(var+eps),
/// b' = (b - mean) * g/sqrt(var+eps) + beta.
KernelF fuse_batchnorm(const KernelF& w, const BatchNormParams& bn);

/// Q7 quantization: weights clamp(round_half_away(128*w), -128, 127);
/// bias round_half_away(128*b) as int32 (accumulator domain, unclamped).
KernelQ quantize_weights(const KernelF& w, const QuantSpec& q = {});

// --- layer graph ---

/// One node of the model DAG. `inputs` name producer layers; the reserved
/// name "input" refers to the graph input. Conv kinds declare their output
/// geometry here; the weights themselves may be bound later.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::conv2d;
  std::vector<std::string> inputs;

  // conv kinds
  int out_channels = 0;
  int kh = 0;
  int kw = 0;
  int stride = 1;
  int padding = 0;
  int output_padding = 0;  // conv_transpose2d only
  Activation activation = Activation::none;
  int output_shift = 0;  // quantized mode
  std::optional<KernelF> kernel;
  std::optional<KernelQ> qkernel;

  // fold / unfold kinds
  int alpha = 1;
};

constexpr std::string_view kGraphInputName = "input";

struct ModelGraph {
  Shape input_shape;
  std::vector<LayerSpec> layers;  // topological order
  std::string output_layer;

  const LayerSpec* find(std::string_view name) const;
  LayerSpec* find(std::string_view name);
};

/// Output shape of a single layer given its input shapes. Shared by shape
/// propagation and the accelerator cost model.
Shape layer_output_shape(const LayerSpec& layer, const std::vector<Shape>& inputs);

struct LayerShapes {
  std::vector<Shape> input;  // per declared input, in order
  Shape output;
};

/// Validates the graph (unique names, topological references, per-kind
/// arity) and resolves every layer's shapes. Throws ShapeError naming the
/// first offending layer.
std::vector<LayerShapes> propagate_shapes(const ModelGraph& g);

/// Float reference execution.
TensorF run_graph(const ModelGraph& g, const TensorF& x);

/// Quantized execution: int8 activations, int32 accumulators, per-layer
/// output_shift. Bit-deterministic across runs and platforms.
TensorI8 run_graph(const ModelGraph& g, const TensorI8& x);

/// Conv-kind weight and bias element count; pool/concat/fold contribute 0.
std::int64_t param_count(const ModelGraph& g);

/// Fills qkernel on every conv layer from its float kernel.
void quantize_graph(ModelGraph& g, const QuantSpec& q = {});

/// Deterministically fills every conv layer with uniform float weights in
/// [-0.5, 0.5) from the seed, then quantizes. Platform-independent stream.
void randomize_weights(ModelGraph& g, std::uint64_t seed);

}  // namespace l3u
