#include "l3u/image_io.hpp"

#include <fstream>
#include <string>

namespace l3u {

namespace {

// Skips whitespace and '#' comment lines between PNM header tokens.
int next_header_int(std::istream& is, const char* what) {
  int c = is.get();
  while (c != std::char_traits<char>::eof()) {
    if (c == '#') {
      while (c != '\n' && c != std::char_traits<char>::eof()) c = is.get();
    } else if (std::isspace(c)) {
      c = is.get();
    } else {
      break;
    }
  }
  if (!std::isdigit(c)) {
    throw std::runtime_error(std::string("PNM: malformed header, expected ") + what);
  }
  int value = 0;
  while (std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = is.get();
  }
  // c is the single whitespace terminating the token.
  return value;
}

void write_pnm(const std::filesystem::path& path, const ImageU8& img, int channels,
               const char* magic) {
  if (img.channels != channels) {
    throw std::invalid_argument(std::string(magic) + " writer needs " + std::to_string(channels) +
                                "-channel image, got " + std::to_string(img.channels));
  }
  if (img.height < 1 || img.width < 1 ||
      img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * img.channels) {
    throw std::invalid_argument("image buffer does not match its dims");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << magic << "\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw std::runtime_error("PNM: write failed for " + path.string());
}

}  // namespace

ImageU8 read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[2];
  is.read(magic, 2);
  if (!is || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw std::runtime_error(path.string() + ": not a binary PGM (P5) or PPM (P6) file");
  }
  ImageU8 img;
  img.channels = magic[1] == '5' ? 1 : 3;
  img.width = next_header_int(is, "width");
  img.height = next_header_int(is, "height");
  const int maxval = next_header_int(is, "maxval");
  if (maxval < 1 || maxval > 255) {
    throw std::runtime_error(path.string() + ": unsupported maxval " + std::to_string(maxval));
  }
  if (img.width < 1 || img.height < 1) {
    throw std::runtime_error(path.string() + ": invalid dimensions");
  }
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width * img.channels);
  is.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!is) throw std::runtime_error(path.string() + ": truncated pixel data");
  return img;
}

void write_pgm(const std::filesystem::path& path, const ImageU8& img) {
  write_pnm(path, img, 1, "P5");
}

void write_ppm(const std::filesystem::path& path, const ImageU8& img) {
  write_pnm(path, img, 3, "P6");
}

TensorI8 image_to_tensor_i8(const ImageU8& img) {
  TensorI8 t(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        t.at(c, y, x) = static_cast<std::int8_t>(static_cast<int>(img.at(y, x, c)) - 128);
      }
    }
  }
  return t;
}

TensorF image_to_tensor_f32(const ImageU8& img) {
  TensorF t(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        t.at(c, y, x) = static_cast<float>(static_cast<int>(img.at(y, x, c)) - 128);
      }
    }
  }
  return t;
}

}  // namespace l3u
