// cmd_verify: randomized self-checks of the folding equivalence, roundtrip,
// transposed-conv and BatchNorm-fusion properties. The reference routines
// here are written straight from the definitions and share no code with the
// engine paths they check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>

#include "l3u/nn.hpp"
#include "l3u/tensor.hpp"

namespace fs = std::filesystem;
using namespace l3u;

namespace {

struct CaseRng {
  std::mt19937_64 rng;
  explicit CaseRng(std::uint64_t seed) : rng(seed) {}
  int uniform(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  std::int8_t i8(int lo, int hi) { return static_cast<std::int8_t>(uniform(lo, hi)); }
  float unit() { return static_cast<float>((rng() >> 11) * (1.0 / 9007199254740992.0)); }
};

TensorI8 random_tensor(CaseRng& r, int c, int h, int w, int lo, int hi) {
  TensorI8 t(c, h, w);
  for (auto& v : t.data()) v = r.i8(lo, hi);
  return t;
}

KernelQ random_kernel(CaseRng& r, int out_c, int in_c, int kh, int kw, int lo, int hi) {
  KernelQ k = KernelQ::zeros(out_c, in_c, kh, kw);
  for (auto& v : k.weights) v = r.i8(lo, hi);
  for (auto& b : k.bias) b = r.uniform(-100, 100);
  return k;
}

// Reference convolution: materialize the zero-padded input, then take the
// dot product per output position.
TensorI32 reference_conv(const TensorI8& x, const KernelQ& w, int stride, int padding) {
  const int ph = x.height() + 2 * padding;
  const int pw = x.width() + 2 * padding;
  TensorI32 padded(x.channels(), ph, pw);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < x.height(); ++y) {
      for (int xx = 0; xx < x.width(); ++xx) {
        padded.at(c, y + padding, xx + padding) = x.at(c, y, xx);
      }
    }
  }
  const int h_out = (ph - w.kh) / stride + 1;
  const int w_out = (pw - w.kw) / stride + 1;
  TensorI32 y(w.out_channels, h_out, w_out);
  for (int o = 0; o < w.out_channels; ++o) {
    for (int oy = 0; oy < h_out; ++oy) {
      for (int ox = 0; ox < w_out; ++ox) {
        std::int32_t acc = w.bias[o];
        for (int c = 0; c < w.in_channels; ++c) {
          for (int p = 0; p < w.kh; ++p) {
            for (int q = 0; q < w.kw; ++q) {
              acc += padded.at(c, oy * stride + p, ox * stride + q) * w.at(o, c, p, q);
            }
          }
        }
        y.at(o, oy, ox) = acc;
      }
    }
  }
  return y;
}

// Transposed convolution by its textbook construction: insert stride-1
// zeros between elements, pad by kh-1-padding (plus output_padding at the
// far edges), then convolve with the spatially flipped kernel.
TensorI32 reference_transpose(const TensorI8& x, const KernelQ& w, int stride, int padding,
                              int output_padding) {
  const int base_pad = w.kh - 1 - padding;  // callers keep padding <= kh-1
  const int ih = (x.height() - 1) * stride + 1;
  const int iw = (x.width() - 1) * stride + 1;
  TensorI8 expanded(x.channels(), ih + 2 * base_pad + output_padding,
                    iw + 2 * base_pad + output_padding);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < x.height(); ++y) {
      for (int xx = 0; xx < x.width(); ++xx) {
        expanded.at(c, base_pad + y * stride, base_pad + xx * stride) = x.at(c, y, xx);
      }
    }
  }
  KernelQ flipped = w;
  for (int o = 0; o < w.out_channels; ++o) {
    for (int c = 0; c < w.in_channels; ++c) {
      for (int p = 0; p < w.kh; ++p) {
        for (int q = 0; q < w.kw; ++q) {
          flipped.at(o, c, p, q) = w.at(o, c, w.kh - 1 - p, w.kw - 1 - q);
        }
      }
    }
  }
  return reference_conv(expanded, flipped, 1, 0);
}

// Folded-channel layout with the (dh, dw) order deliberately swapped; used
// by the --hook-corrupt-kernel negative control.
KernelQ corrupted_fold_kernel(const KernelQ& w, int alpha) {
  KernelQ r = KernelQ::zeros(w.out_channels, alpha * alpha * w.in_channels, w.kh / alpha,
                             w.kw / alpha);
  r.bias = w.bias;
  for (int o = 0; o < w.out_channels; ++o) {
    for (int dh = 0; dh < alpha; ++dh) {
      for (int dw = 0; dw < alpha; ++dw) {
        for (int c = 0; c < w.in_channels; ++c) {
          const int rc = (dw * alpha + dh) * w.in_channels + c;
          for (int p = 0; p < r.kh; ++p) {
            for (int q = 0; q < r.kw; ++q) {
              r.at(o, rc, p, q) = w.at(o, c, p * alpha + dh, q * alpha + dw);
            }
          }
        }
      }
    }
  }
  return r;
}

struct PropertyResult {
  bool passed = true;
  std::string detail;
};

void dump_counterexample(const fs::path& dir, const TensorI8& x, const KernelQ& w,
                         const TensorI32& lhs, const TensorI32& rhs) {
  write_tensor(dir / "verify_input.l3ut", AnyTensor(x));
  // Kernel dumped as an (out*in) x kh x kw int8 tensor.
  TensorI8 kt = TensorI8::from_data(w.out_channels * w.in_channels, w.kh, w.kw,
                                    std::vector<std::int8_t>(w.weights));
  write_tensor(dir / "verify_kernel.l3ut", AnyTensor(kt));
  write_tensor(dir / "verify_lhs.l3ut", AnyTensor(lhs));
  write_tensor(dir / "verify_rhs.l3ut", AnyTensor(rhs));
  std::cerr << "counterexample dumped to " << dir.string() << "/verify_*.l3ut\n";
}

PropertyResult check_roundtrip(std::uint64_t seed, int cases) {
  CaseRng r(seed);
  for (int i = 0; i < cases; ++i) {
    const int alpha = r.uniform(1, 4);
    const int c = r.uniform(1, 4);
    const int h = alpha * r.uniform(1, 6);
    const int w = alpha * r.uniform(1, 6);
    const TensorI8 x = random_tensor(r, c, h, w, -128, 127);
    const FoldSpec spec{alpha};
    const TensorI8 folded = fold(x, spec);
    if (unfold(folded, spec) != x) {
      return {false, "roundtrip mismatch at case " + std::to_string(i)};
    }
    std::vector<std::int8_t> a(x.data().begin(), x.data().end());
    std::vector<std::int8_t> b(folded.data().begin(), folded.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) return {false, "fold did not preserve the value multiset at case " + std::to_string(i)};
  }
  return {};
}

PropertyResult check_fold_equivalence(std::uint64_t seed, int cases, const fs::path& dump_dir,
                                      bool corrupt) {
  CaseRng r(seed);
  for (int i = 0; i < cases; ++i) {
    const int alpha = r.uniform(1, 4);
    const int k = r.uniform(1, 3);
    const int s = r.uniform(1, 2);
    const int cin = r.uniform(1, 3);
    const int cout = r.uniform(1, 4);
    const int h = alpha * (k + s * r.uniform(0, 2));
    const int w = alpha * (k + s * r.uniform(0, 2));
    const TensorI8 x = random_tensor(r, cin, h, w, -8, 7);
    const KernelQ kern = random_kernel(r, cout, cin, alpha * k, alpha * k, -8, 7);
    const FoldSpec spec{alpha};

    const KernelQ folded_kernel =
        (corrupt && alpha > 1) ? corrupted_fold_kernel(kern, alpha) : fold_kernel(kern, spec);
    const TensorI32 lhs = conv2d_accumulate(fold(x, spec), folded_kernel, s, 0);
    const TensorI32 rhs = reference_conv(x, kern, alpha * s, 0);
    if (lhs != rhs) {
      dump_counterexample(dump_dir, x, kern, lhs, rhs);
      return {false, "folded-conv equivalence failed at case " + std::to_string(i) + " (alpha=" +
                         std::to_string(alpha) + " k=" + std::to_string(k) + " s=" +
                         std::to_string(s) + ")"};
    }
  }
  return {};
}

PropertyResult check_transpose_oracle(std::uint64_t seed, int cases, const fs::path& dump_dir) {
  CaseRng r(seed);
  for (int i = 0; i < cases; ++i) {
    int k, s, pad, outpad, h, w, cin, cout;
    if (i == 0) {
      // The resolution-doubling configuration.
      k = 3, s = 2, pad = 1, outpad = 1, h = 4, w = 4, cin = 2, cout = 2;
    } else {
      k = r.uniform(1, 3);
      s = r.uniform(1, 3);
      pad = r.uniform(0, k - 1);
      outpad = r.uniform(0, std::max(0, s - 1));
      h = r.uniform(1, 5);
      w = r.uniform(1, 5);
      cin = r.uniform(1, 3);
      cout = r.uniform(1, 3);
    }
    const TensorI8 x = random_tensor(r, cin, h, w, -8, 7);
    const KernelQ kern = random_kernel(r, cout, cin, k, k, -8, 7);
    const TensorI32 lhs = convtranspose2d_accumulate(x, kern, s, pad, outpad);
    const TensorI32 rhs = reference_transpose(x, kern, s, pad, outpad);
    if (lhs != rhs) {
      dump_counterexample(dump_dir, x, kern, lhs, rhs);
      return {false, "transposed conv disagrees with zero-insertion construction at case " +
                         std::to_string(i)};
    }
  }
  return {};
}

PropertyResult check_fusion(std::uint64_t seed, int cases) {
  CaseRng r(seed);
  for (int i = 0; i < cases; ++i) {
    const int cin = r.uniform(1, 4);
    const int cout = r.uniform(1, 4);
    const int k = r.uniform(1, 3);
    const int hw = r.uniform(k, 6);
    KernelF kern = KernelF::zeros(cout, cin, k, k);
    for (auto& v : kern.weights) v = 2 * r.unit() - 1;
    for (auto& b : kern.bias) b = 2 * r.unit() - 1;
    BatchNormParams bn;
    for (int o = 0; o < cout; ++o) {
      bn.gamma.push_back(0.5f + 1.5f * r.unit());
      bn.beta.push_back(2 * r.unit() - 1);
      bn.running_mean.push_back(2 * r.unit() - 1);
      bn.running_var.push_back(0.01f + 2 * r.unit());
    }
    TensorF x(cin, hw, hw);
    for (auto& v : x.data()) v = 2 * r.unit() - 1;

    const TensorF plain = conv2d_forward(x, kern, 1, 0, Activation::none);
    const TensorF fused = conv2d_forward(x, fuse_batchnorm(kern, bn), 1, 0, Activation::none);
    for (int o = 0; o < cout; ++o) {
      const double scale = bn.gamma[o] / std::sqrt(static_cast<double>(bn.running_var[o]) + bn.epsilon);
      for (int y = 0; y < plain.height(); ++y) {
        for (int xx = 0; xx < plain.width(); ++xx) {
          const double want = (plain.at(o, y, xx) - bn.running_mean[o]) * scale + bn.beta[o];
          if (std::abs(want - fused.at(o, y, xx)) > 1e-5) {
            return {false, "fusion error " + std::to_string(std::abs(want - fused.at(o, y, xx))) +
                               " above 1e-5 at case " + std::to_string(i)};
          }
        }
      }
    }
  }
  return {};
}

}  // namespace

int run_verify(std::uint64_t seed, int cases, const std::string& dump_dir, bool corrupt_kernel) {
  const fs::path dump(dump_dir);
  struct Entry {
    const char* name;
    PropertyResult result;
  };
  const auto t0 = std::chrono::steady_clock::now();
  Entry entries[] = {
      {"fold/unfold roundtrip + value conservation", check_roundtrip(seed ^ 0x01, cases)},
      {"folded-conv equivalence vs reference conv",
       check_fold_equivalence(seed ^ 0x02, cases, dump, corrupt_kernel)},
      {"transposed conv vs zero-insertion construction",
       check_transpose_oracle(seed ^ 0x03, cases, dump)},
      {"batchnorm fusion within 1e-5", check_fusion(seed ^ 0x04, cases)},
  };
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  bool all = true;
  for (const Entry& e : entries) {
    std::printf("[%s] %s (%d cases)%s%s\n", e.result.passed ? "PASS" : "FAIL", e.name, cases,
                e.result.detail.empty() ? "" : ": ", e.result.detail.c_str());
    all = all && e.result.passed;
  }
  std::printf("%s in %lld ms\n", all ? "all properties hold" : "FAILURES detected",
              static_cast<long long>(ms));
  return all ? 0 : 1;
}
