#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "l3u/tensor.hpp"

namespace l3u {

/// Interleaved 8-bit image, row-major. channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const ImageU8&) const = default;
};

/// Reads a binary PNM file: P5 -> 1 channel, P6 -> 3 channels. maxval must
/// be <= 255. Header comments (#) are allowed.
ImageU8 read_pnm(const std::filesystem::path& path);

/// Deterministic writers: header "P5\n<w> <h>\n255\n" (or P6) + raw rows.
void write_pgm(const std::filesystem::path& path, const ImageU8& img);
void write_ppm(const std::filesystem::path& path, const ImageU8& img);

/// Planar CHW tensor from an interleaved image with the signed mapping
/// v -> v - 128 used by the int8 activation pipeline.
TensorI8 image_to_tensor_i8(const ImageU8& img);
TensorF image_to_tensor_f32(const ImageU8& img);

}  // namespace l3u
