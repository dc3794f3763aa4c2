#include "l3u/tensor.hpp"

#include <fstream>
#include <limits>

#include "binio.hpp"

namespace l3u {

namespace {

constexpr char kMagic[5] = "L3UT";
constexpr std::uint8_t kVersion = 1;

template <typename T>
void write_payload(std::ostream& os, const Tensor<T>& t) {
  for (const T& v : t.data()) {
    if constexpr (std::is_same_v<T, float>) {
      binio::put_f32(os, v);
    } else if constexpr (std::is_same_v<T, std::int8_t>) {
      os.put(static_cast<char>(v));
    } else {
      binio::put_i32(os, v);
    }
  }
}

template <typename T>
Tensor<T> read_payload(std::istream& is, int c, int h, int w) {
  Tensor<T> t(c, h, w);
  for (T& v : t.data()) {
    if constexpr (std::is_same_v<T, float>) {
      v = binio::get_f32(is);
    } else if constexpr (std::is_same_v<T, std::int8_t>) {
      v = static_cast<std::int8_t>(binio::get_u8(is));
    } else {
      v = binio::get_i32(is);
    }
  }
  return t;
}

int checked_dim(std::uint32_t v, const char* axis) {
  if (v < 1 || v > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
    throw std::runtime_error(std::string("L3UT: invalid ") + axis + " dimension " + std::to_string(v));
  }
  return static_cast<int>(v);
}

}  // namespace

std::string to_string(const Shape& s) {
  return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

DType dtype(const AnyTensor& t) {
  return std::visit([](const auto& x) { return dtype_of<typename std::decay_t<decltype(x)>::value_type>::value; },
                    t);
}

Shape shape(const AnyTensor& t) {
  return std::visit([](const auto& x) { return x.shape(); }, t);
}

void write_tensor(std::ostream& os, const AnyTensor& t) {
  const Shape s = shape(t);
  if (s.c < 1) throw ShapeError("L3UT: refusing to serialize tensor with zero channels");
  os.write(kMagic, 4);
  binio::put_u8(os, kVersion);
  binio::put_u8(os, static_cast<std::uint8_t>(dtype(t)));
  binio::put_u32(os, static_cast<std::uint32_t>(s.c));
  binio::put_u32(os, static_cast<std::uint32_t>(s.h));
  binio::put_u32(os, static_cast<std::uint32_t>(s.w));
  std::visit([&os](const auto& x) { write_payload(os, x); }, t);
  if (!os) throw std::runtime_error("L3UT: write failed");
}

void write_tensor(const std::filesystem::path& path, const AnyTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

AnyTensor read_tensor(std::istream& is) {
  binio::expect_magic(is, kMagic, "L3UT tensor");
  const std::uint8_t version = binio::get_u8(is);
  if (version != kVersion) {
    throw std::runtime_error("L3UT: unsupported format version " + std::to_string(version));
  }
  const std::uint8_t mode = binio::get_u8(is);
  const int c = checked_dim(binio::get_u32(is), "channel");
  const int h = checked_dim(binio::get_u32(is), "height");
  const int w = checked_dim(binio::get_u32(is), "width");
  switch (static_cast<DType>(mode)) {
    case DType::f32:
      return read_payload<float>(is, c, h, w);
    case DType::i8:
      return read_payload<std::int8_t>(is, c, h, w);
    case DType::i32:
      return read_payload<std::int32_t>(is, c, h, w);
    default:
      throw std::runtime_error("L3UT: unknown mode byte " + std::to_string(mode));
  }
}

AnyTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace l3u
