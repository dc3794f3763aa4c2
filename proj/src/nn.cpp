#include "l3u/nn.hpp"

#include <cmath>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace l3u {

namespace {

struct ConvDims {
  int h_out = 0;
  int w_out = 0;
};

ConvDims conv_output_dims(int h, int w, int kh, int kw, int stride, int padding) {
  const int num_h = h + 2 * padding - kh;
  const int num_w = w + 2 * padding - kw;
  if (num_h < 0 || num_w < 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + std::to_string(h + 2 * padding) + "x" +
                     std::to_string(w + 2 * padding));
  }
  if (num_h % stride != 0) {
    throw ShapeError("conv2d: non-integral output height, (" + std::to_string(h) + " + 2*" +
                     std::to_string(padding) + " - " + std::to_string(kh) + ") not divisible by stride " +
                     std::to_string(stride));
  }
  if (num_w % stride != 0) {
    throw ShapeError("conv2d: non-integral output width, (" + std::to_string(w) + " + 2*" +
                     std::to_string(padding) + " - " + std::to_string(kw) + ") not divisible by stride " +
                     std::to_string(stride));
  }
  return {num_h / stride + 1, num_w / stride + 1};
}

ConvDims transpose_output_dims(int h, int w, int kh, int kw, int stride, int padding,
                               int output_padding) {
  const int h_out = (h - 1) * stride - 2 * padding + kh + output_padding;
  const int w_out = (w - 1) * stride - 2 * padding + kw + output_padding;
  if (h_out < 1 || w_out < 1) {
    throw ShapeError("convtranspose2d: nonpositive output dims " + std::to_string(h_out) + "x" +
                     std::to_string(w_out));
  }
  return {h_out, w_out};
}

template <typename TIn, typename W>
void check_conv_channels(const Tensor<TIn>& x, const Kernel4D<W>& w, const char* op) {
  if (x.channels() != w.in_channels) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.channels()) +
                     " channels but kernel expects " + std::to_string(w.in_channels));
  }
}

template <typename TIn, typename W, typename TAcc>
Tensor<TAcc> conv2d_generic(const Tensor<TIn>& x, const Kernel4D<W>& w, int stride, int padding) {
  check_conv_channels(x, w, "conv2d");
  const ConvDims d = conv_output_dims(x.height(), x.width(), w.kh, w.kw, stride, padding);
  Tensor<TAcc> y(w.out_channels, d.h_out, d.w_out);
  for (int o = 0; o < w.out_channels; ++o) {
    const TAcc b = static_cast<TAcc>(w.bias[o]);
    for (int oy = 0; oy < d.h_out; ++oy) {
      for (int ox = 0; ox < d.w_out; ++ox) {
        TAcc acc = b;
        for (int ci = 0; ci < w.in_channels; ++ci) {
          for (int p = 0; p < w.kh; ++p) {
            const int iy = oy * stride - padding + p;
            if (iy < 0 || iy >= x.height()) continue;
            for (int q = 0; q < w.kw; ++q) {
              const int ix = ox * stride - padding + q;
              if (ix < 0 || ix >= x.width()) continue;
              acc += static_cast<TAcc>(x.at(ci, iy, ix)) * static_cast<TAcc>(w.at(o, ci, p, q));
            }
          }
        }
        y.at(o, oy, ox) = acc;
      }
    }
  }
  return y;
}

template <typename TIn, typename W, typename TAcc>
Tensor<TAcc> convtranspose2d_generic(const Tensor<TIn>& x, const Kernel4D<W>& w, int stride,
                                     int padding, int output_padding) {
  check_conv_channels(x, w, "convtranspose2d");
  const ConvDims d =
      transpose_output_dims(x.height(), x.width(), w.kh, w.kw, stride, padding, output_padding);
  Tensor<TAcc> y(w.out_channels, d.h_out, d.w_out);
  for (int o = 0; o < w.out_channels; ++o) {
    const TAcc b = static_cast<TAcc>(w.bias[o]);
    for (int oy = 0; oy < d.h_out; ++oy) {
      for (int ox = 0; ox < d.w_out; ++ox) {
        y.at(o, oy, ox) = b;
      }
    }
  }
  for (int o = 0; o < w.out_channels; ++o) {
    for (int ci = 0; ci < w.in_channels; ++ci) {
      for (int iy = 0; iy < x.height(); ++iy) {
        for (int ix = 0; ix < x.width(); ++ix) {
          const TAcc v = static_cast<TAcc>(x.at(ci, iy, ix));
          for (int p = 0; p < w.kh; ++p) {
            const int oy = iy * stride - padding + p;
            if (oy < 0 || oy >= d.h_out) continue;
            for (int q = 0; q < w.kw; ++q) {
              const int ox = ix * stride - padding + q;
              if (ox < 0 || ox >= d.w_out) continue;
              y.at(o, oy, ox) += v * static_cast<TAcc>(w.at(o, ci, p, q));
            }
          }
        }
      }
    }
  }
  return y;
}

TensorF apply_activation(TensorF y, Activation activation) {
  if (activation == Activation::relu) {
    for (float& v : y.data()) v = std::max(0.0f, v);
  }
  return y;
}

TensorI8 requantize_map(const TensorI32& acc, Activation activation, int output_shift) {
  TensorI8 y(acc.channels(), acc.height(), acc.width());
  auto src = acc.data();
  auto dst = y.data();
  for (std::int64_t i = 0; i < acc.size(); ++i) {
    std::int8_t v = requantize(src[i], output_shift);
    if (activation == Activation::relu && v < 0) v = 0;
    dst[i] = v;
  }
  return y;
}

}  // namespace

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv_transpose2d: return "conv_transpose2d";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::concat: return "concat";
    case LayerKind::fold: return "fold";
    case LayerKind::unfold: return "unfold";
  }
  return "?";
}

TensorF conv2d_forward(const TensorF& x, const KernelF& w, int stride, int padding,
                       Activation activation) {
  return apply_activation(conv2d_generic<float, float, float>(x, w, stride, padding), activation);
}

TensorI32 conv2d_accumulate(const TensorI8& x, const KernelQ& w, int stride, int padding) {
  return conv2d_generic<std::int8_t, std::int8_t, std::int32_t>(x, w, stride, padding);
}

TensorI8 conv2d_forward(const TensorI8& x, const KernelQ& w, int stride, int padding,
                        Activation activation, int output_shift) {
  return requantize_map(conv2d_accumulate(x, w, stride, padding), activation, output_shift);
}

TensorF convtranspose2d_forward(const TensorF& x, const KernelF& w, int stride, int padding,
                                int output_padding, Activation activation) {
  return apply_activation(
      convtranspose2d_generic<float, float, float>(x, w, stride, padding, output_padding),
      activation);
}

TensorI32 convtranspose2d_accumulate(const TensorI8& x, const KernelQ& w, int stride, int padding,
                                     int output_padding) {
  return convtranspose2d_generic<std::int8_t, std::int8_t, std::int32_t>(x, w, stride, padding,
                                                                         output_padding);
}

TensorI8 convtranspose2d_forward(const TensorI8& x, const KernelQ& w, int stride, int padding,
                                 int output_padding, Activation activation, int output_shift) {
  return requantize_map(convtranspose2d_accumulate(x, w, stride, padding, output_padding),
                        activation, output_shift);
}

KernelF fuse_batchnorm(const KernelF& w, const BatchNormParams& bn) {
  const std::size_t n = static_cast<std::size_t>(w.out_channels);
  if (bn.gamma.size() != n || bn.beta.size() != n || bn.running_mean.size() != n ||
      bn.running_var.size() != n) {
    throw ShapeError("fuse_batchnorm: BatchNorm arrays do not match " + std::to_string(n) +
                     " output channels");
  }
  KernelF fused = w;
  for (int o = 0; o < w.out_channels; ++o) {
    const double denom = static_cast<double>(bn.running_var[o]) + bn.epsilon;
    if (denom <= 0.0) {
      throw std::invalid_argument("fuse_batchnorm: var + eps <= 0 at channel " + std::to_string(o));
    }
    const double scale = bn.gamma[o] / std::sqrt(denom);
    for (int i = 0; i < w.in_channels; ++i) {
      for (int p = 0; p < w.kh; ++p) {
        for (int q = 0; q < w.kw; ++q) {
          fused.at(o, i, p, q) = static_cast<float>(w.at(o, i, p, q) * scale);
        }
      }
    }
    fused.bias[o] =
        static_cast<float>((w.bias[o] - bn.running_mean[o]) * scale + bn.beta[o]);
  }
  return fused;
}

KernelQ quantize_weights(const KernelF& w, const QuantSpec& q) {
  KernelQ out = KernelQ::zeros(w.out_channels, w.in_channels, w.kh, w.kw);
  const double scale = q.weight_scale;
  for (std::size_t i = 0; i < w.weights.size(); ++i) {
    const long r = std::lround(w.weights[i] * scale);
    out.weights[i] = static_cast<std::int8_t>(std::clamp<long>(r, -128, 127));
  }
  for (std::size_t i = 0; i < w.bias.size(); ++i) {
    out.bias[i] = static_cast<std::int32_t>(std::llround(w.bias[i] * scale));
  }
  return out;
}

const LayerSpec* ModelGraph::find(std::string_view name) const {
  for (const auto& l : layers) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

LayerSpec* ModelGraph::find(std::string_view name) {
  for (auto& l : layers) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

Shape layer_output_shape(const LayerSpec& layer, const std::vector<Shape>& inputs) {
  switch (layer.kind) {
    case LayerKind::conv2d: {
      const Shape& in = inputs.at(0);
      const ConvDims d =
          conv_output_dims(in.h, in.w, layer.kh, layer.kw, layer.stride, layer.padding);
      return {layer.out_channels, d.h_out, d.w_out};
    }
    case LayerKind::conv_transpose2d: {
      const Shape& in = inputs.at(0);
      const ConvDims d = transpose_output_dims(in.h, in.w, layer.kh, layer.kw, layer.stride,
                                               layer.padding, layer.output_padding);
      return {layer.out_channels, d.h_out, d.w_out};
    }
    case LayerKind::maxpool2x2: {
      const Shape& in = inputs.at(0);
      if (in.h % 2 != 0 || in.w % 2 != 0) {
        throw ShapeError("maxpool2x2 requires even spatial dims, got " + to_string(in));
      }
      return {in.c, in.h / 2, in.w / 2};
    }
    case LayerKind::concat: {
      const Shape& a = inputs.at(0);
      const Shape& b = inputs.at(1);
      if (a.h != b.h || a.w != b.w) {
        throw ShapeError("concat inputs differ spatially: " + to_string(a) + " vs " + to_string(b));
      }
      return {a.c + b.c, a.h, a.w};
    }
    case LayerKind::fold: {
      const Shape& in = inputs.at(0);
      const int a = layer.alpha;
      if (a < 1) throw ShapeError("fold alpha must be >= 1");
      if (in.h % a != 0) {
        throw DivisibilityError("fold: height " + std::to_string(in.h) + " not divisible by alpha " +
                                std::to_string(a));
      }
      if (in.w % a != 0) {
        throw DivisibilityError("fold: width " + std::to_string(in.w) + " not divisible by alpha " +
                                std::to_string(a));
      }
      return {a * a * in.c, in.h / a, in.w / a};
    }
    case LayerKind::unfold: {
      const Shape& in = inputs.at(0);
      const int aa = layer.alpha * layer.alpha;
      if (in.c % aa != 0) {
        throw DivisibilityError("unfold: channel count " + std::to_string(in.c) +
                                " not divisible by alpha^2 = " + std::to_string(aa));
      }
      return {in.c / aa, in.h * layer.alpha, in.w * layer.alpha};
    }
  }
  throw std::logic_error("unknown layer kind");
}

std::vector<LayerShapes> propagate_shapes(const ModelGraph& g) {
  if (g.input_shape.c < 1 || g.input_shape.h < 1 || g.input_shape.w < 1) {
    throw ShapeError("graph input shape invalid: " + to_string(g.input_shape));
  }
  std::unordered_map<std::string, Shape> known;
  std::unordered_set<std::string> names;
  std::vector<LayerShapes> result;
  result.reserve(g.layers.size());

  for (const LayerSpec& layer : g.layers) {
    auto fail = [&layer](const std::string& msg) -> ShapeError {
      return ShapeError("layer '" + layer.name + "': " + msg);
    };
    if (layer.name.empty() || layer.name == kGraphInputName) {
      throw fail("invalid layer name");
    }
    if (!names.insert(layer.name).second) {
      throw fail("duplicate layer name");
    }
    const std::size_t want_inputs = layer.kind == LayerKind::concat ? 2 : 1;
    if (layer.inputs.size() != want_inputs) {
      throw fail("expects " + std::to_string(want_inputs) + " input(s), has " +
                 std::to_string(layer.inputs.size()));
    }
    LayerShapes ls;
    for (const std::string& in : layer.inputs) {
      if (in == kGraphInputName) {
        ls.input.push_back(g.input_shape);
      } else {
        auto it = known.find(in);
        if (it == known.end()) {
          throw fail("input '" + in + "' is not a preceding layer");
        }
        ls.input.push_back(it->second);
      }
    }
    if (layer.kind == LayerKind::conv2d || layer.kind == LayerKind::conv_transpose2d) {
      if (layer.out_channels < 1 || layer.kh < 1 || layer.kw < 1 || layer.stride < 1 ||
          layer.padding < 0 || layer.output_padding < 0) {
        throw fail("invalid conv geometry");
      }
      const auto check_kernel = [&](int in_c, int out_c, int kh, int kw) {
        if (out_c != layer.out_channels || in_c != ls.input[0].c || kh != layer.kh ||
            kw != layer.kw) {
          throw fail("bound kernel shape (" + std::to_string(out_c) + "," + std::to_string(in_c) +
                     "," + std::to_string(kh) + "," + std::to_string(kw) +
                     ") does not match declared geometry");
        }
      };
      if (layer.kernel) {
        check_kernel(layer.kernel->in_channels, layer.kernel->out_channels, layer.kernel->kh,
                     layer.kernel->kw);
      }
      if (layer.qkernel) {
        check_kernel(layer.qkernel->in_channels, layer.qkernel->out_channels, layer.qkernel->kh,
                     layer.qkernel->kw);
      }
    }
    try {
      ls.output = layer_output_shape(layer, ls.input);
    } catch (const DivisibilityError& e) {
      throw ShapeError("layer '" + layer.name + "': " + e.what());
    } catch (const ShapeError& e) {
      throw ShapeError("layer '" + layer.name + "': " + e.what());
    }
    known.emplace(layer.name, ls.output);
    result.push_back(std::move(ls));
  }
  if (g.output_layer.empty() || !known.contains(g.output_layer)) {
    throw ShapeError("output layer '" + g.output_layer + "' not found in graph");
  }
  return result;
}

namespace {

template <typename T>
Tensor<T> run_layer(const LayerSpec& layer, const std::vector<const Tensor<T>*>& in) {
  constexpr bool quantized = std::is_same_v<T, std::int8_t>;
  switch (layer.kind) {
    case LayerKind::conv2d:
    case LayerKind::conv_transpose2d: {
      if constexpr (quantized) {
        if (!layer.qkernel) {
          throw std::logic_error("layer '" + layer.name + "': quantized kernel not bound");
        }
        if (layer.kind == LayerKind::conv2d) {
          return conv2d_forward(*in[0], *layer.qkernel, layer.stride, layer.padding,
                                layer.activation, layer.output_shift);
        }
        return convtranspose2d_forward(*in[0], *layer.qkernel, layer.stride, layer.padding,
                                       layer.output_padding, layer.activation, layer.output_shift);
      } else {
        if (!layer.kernel) {
          throw std::logic_error("layer '" + layer.name + "': float kernel not bound");
        }
        if (layer.kind == LayerKind::conv2d) {
          return conv2d_forward(*in[0], *layer.kernel, layer.stride, layer.padding,
                                layer.activation);
        }
        return convtranspose2d_forward(*in[0], *layer.kernel, layer.stride, layer.padding,
                                       layer.output_padding, layer.activation);
      }
    }
    case LayerKind::maxpool2x2:
      return maxpool2x2(*in[0]);
    case LayerKind::concat:
      return concat_channels(*in[0], *in[1]);
    case LayerKind::fold:
      return fold(*in[0], FoldSpec{layer.alpha});
    case LayerKind::unfold:
      return unfold(*in[0], FoldSpec{layer.alpha});
  }
  throw std::logic_error("unknown layer kind");
}

template <typename T>
Tensor<T> run_graph_impl(const ModelGraph& g, const Tensor<T>& x) {
  const std::vector<LayerShapes> shapes = propagate_shapes(g);
  if (x.shape() != g.input_shape) {
    throw ShapeError("graph input: expected " + to_string(g.input_shape) + ", got " +
                     to_string(x.shape()));
  }
  std::unordered_map<std::string, Tensor<T>> cache;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& layer = g.layers[i];
    std::vector<const Tensor<T>*> in;
    in.reserve(layer.inputs.size());
    for (const std::string& name : layer.inputs) {
      in.push_back(name == kGraphInputName ? &x : &cache.at(name));
    }
    Tensor<T> y = run_layer(layer, in);
    if (y.shape() != shapes[i].output) {
      throw std::logic_error("layer '" + layer.name + "': produced " + to_string(y.shape()) +
                             " but shape propagation said " + to_string(shapes[i].output));
    }
    cache.emplace(layer.name, std::move(y));
  }
  return std::move(cache.at(g.output_layer));
}

}  // namespace

TensorF run_graph(const ModelGraph& g, const TensorF& x) { return run_graph_impl(g, x); }

TensorI8 run_graph(const ModelGraph& g, const TensorI8& x) { return run_graph_impl(g, x); }

std::int64_t param_count(const ModelGraph& g) {
  if (g.layers.empty()) return 0;
  const std::vector<LayerShapes> shapes = propagate_shapes(g);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& layer = g.layers[i];
    if (layer.kind != LayerKind::conv2d && layer.kind != LayerKind::conv_transpose2d) continue;
    const std::int64_t in_c = shapes[i].input[0].c;
    total += static_cast<std::int64_t>(layer.out_channels) * (in_c * layer.kh * layer.kw) +
             layer.out_channels;
  }
  return total;
}

void quantize_graph(ModelGraph& g, const QuantSpec& q) {
  for (LayerSpec& layer : g.layers) {
    if (layer.kind != LayerKind::conv2d && layer.kind != LayerKind::conv_transpose2d) continue;
    if (!layer.kernel) {
      throw std::logic_error("layer '" + layer.name + "': no float kernel to quantize");
    }
    layer.qkernel = quantize_weights(*layer.kernel, q);
  }
}

void randomize_weights(ModelGraph& g, std::uint64_t seed) {
  const std::vector<LayerShapes> shapes = propagate_shapes(g);
  std::mt19937_64 rng(seed);
  // Explicit bit mapping instead of std::uniform_real_distribution so the
  // value stream is identical on every platform.
  auto next_uniform = [&rng]() {
    return static_cast<float>((rng() >> 11) * (1.0 / 9007199254740992.0) - 0.5);
  };
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    LayerSpec& layer = g.layers[i];
    if (layer.kind != LayerKind::conv2d && layer.kind != LayerKind::conv_transpose2d) continue;
    KernelF k = KernelF::zeros(layer.out_channels, shapes[i].input[0].c, layer.kh, layer.kw);
    for (float& w : k.weights) w = next_uniform();
    for (float& b : k.bias) b = next_uniform();
    layer.kernel = std::move(k);
  }
  quantize_graph(g);
}

}  // namespace l3u
