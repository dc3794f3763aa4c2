#include "l3u/weights.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "binio.hpp"

namespace l3u {

namespace {

constexpr char kMagic[5] = "L3UW";
constexpr std::uint8_t kVersion = 1;

std::uint64_t product(const std::vector<std::uint32_t>& dims) {
  std::uint64_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

}  // namespace

std::uint64_t WeightRecord::element_count() const { return product(dims); }

std::vector<WeightRecord> read_weight_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  binio::expect_magic(is, kMagic, "L3UW weight");
  const std::uint8_t version = binio::get_u8(is);
  if (version != kVersion) {
    throw std::runtime_error("L3UW: unsupported format version " + std::to_string(version));
  }
  const std::uint32_t count = binio::get_u32(is);
  std::vector<WeightRecord> records(count);
  for (WeightRecord& r : records) {
    const std::uint16_t name_len = binio::get_u16(is);
    r.name.resize(name_len);
    is.read(r.name.data(), name_len);
    if (!is) throw std::runtime_error("L3UW: truncated record name");
    r.dtype = static_cast<DType>(binio::get_u8(is));
    const std::uint8_t rank = binio::get_u8(is);
    r.dims.resize(rank);
    for (std::uint32_t& d : r.dims) d = binio::get_u32(is);
    const std::uint64_t n = r.element_count();
    switch (r.dtype) {
      case DType::f32:
        r.f32.resize(n);
        for (float& v : r.f32) v = binio::get_f32(is);
        break;
      case DType::i8:
        r.i8.resize(n);
        for (std::int8_t& v : r.i8) v = static_cast<std::int8_t>(binio::get_u8(is));
        break;
      case DType::i32:
        r.i32.resize(n);
        for (std::int32_t& v : r.i32) v = binio::get_i32(is);
        break;
      default:
        throw std::runtime_error("L3UW: unknown dtype byte in record '" + r.name + "'");
    }
  }
  return records;
}

void write_weight_file(const std::filesystem::path& path, const std::vector<WeightRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  binio::put_u8(os, kVersion);
  binio::put_u32(os, static_cast<std::uint32_t>(records.size()));
  for (const WeightRecord& r : records) {
    binio::put_u16(os, static_cast<std::uint16_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    binio::put_u8(os, static_cast<std::uint8_t>(r.dtype));
    binio::put_u8(os, static_cast<std::uint8_t>(r.dims.size()));
    for (std::uint32_t d : r.dims) binio::put_u32(os, d);
    switch (r.dtype) {
      case DType::f32:
        for (float v : r.f32) binio::put_f32(os, v);
        break;
      case DType::i8:
        for (std::int8_t v : r.i8) os.put(static_cast<char>(v));
        break;
      case DType::i32:
        for (std::int32_t v : r.i32) binio::put_i32(os, v);
        break;
    }
  }
  if (!os) throw std::runtime_error("L3UW: write failed");
}

std::vector<WeightRecord> collect_weights(const ModelGraph& g, WeightMode mode) {
  std::vector<WeightRecord> records;
  for (const LayerSpec& layer : g.layers) {
    if (layer.kind != LayerKind::conv2d && layer.kind != LayerKind::conv_transpose2d) continue;
    WeightRecord w, b;
    w.name = layer.name + ".weight";
    b.name = layer.name + ".bias";
    if (mode == WeightMode::float32) {
      if (!layer.kernel) {
        throw WeightBindError("layer '" + layer.name + "' has no float kernel to collect");
      }
      const KernelF& k = *layer.kernel;
      w.dtype = DType::f32;
      w.dims = {static_cast<std::uint32_t>(k.out_channels), static_cast<std::uint32_t>(k.in_channels),
                static_cast<std::uint32_t>(k.kh), static_cast<std::uint32_t>(k.kw)};
      w.f32 = k.weights;
      b.dtype = DType::f32;
      b.dims = {static_cast<std::uint32_t>(k.out_channels)};
      b.f32 = k.bias;
    } else {
      if (!layer.qkernel) {
        throw WeightBindError("layer '" + layer.name + "' has no quantized kernel to collect");
      }
      const KernelQ& k = *layer.qkernel;
      w.dtype = DType::i8;
      w.dims = {static_cast<std::uint32_t>(k.out_channels), static_cast<std::uint32_t>(k.in_channels),
                static_cast<std::uint32_t>(k.kh), static_cast<std::uint32_t>(k.kw)};
      w.i8 = k.weights;
      b.dtype = DType::i32;
      b.dims = {static_cast<std::uint32_t>(k.out_channels)};
      b.i32 = k.bias;
    }
    records.push_back(std::move(w));
    records.push_back(std::move(b));
  }
  return records;
}

void bind_weights(ModelGraph& g, const std::vector<WeightRecord>& records) {
  std::map<std::string, const WeightRecord*> by_name;
  for (const WeightRecord& r : records) {
    if (!by_name.emplace(r.name, &r).second) {
      throw WeightBindError("duplicate weight record '" + r.name + "'");
    }
  }
  const std::vector<LayerShapes> shapes = propagate_shapes(g);
  std::set<std::string> used;

  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    LayerSpec& layer = g.layers[i];
    if (layer.kind != LayerKind::conv2d && layer.kind != LayerKind::conv_transpose2d) continue;
    const auto wit = by_name.find(layer.name + ".weight");
    const auto bit = by_name.find(layer.name + ".bias");
    if (wit == by_name.end() || bit == by_name.end()) {
      throw WeightBindError("no weight/bias records for layer '" + layer.name + "'");
    }
    used.insert(wit->first);
    used.insert(bit->first);
    const WeightRecord& w = *wit->second;
    const WeightRecord& b = *bit->second;

    const int in_c = shapes[i].input[0].c;
    const std::vector<std::uint32_t> want = {
        static_cast<std::uint32_t>(layer.out_channels), static_cast<std::uint32_t>(in_c),
        static_cast<std::uint32_t>(layer.kh), static_cast<std::uint32_t>(layer.kw)};
    if (w.dims != want) {
      throw WeightBindError("record '" + w.name + "' dims do not match layer geometry");
    }
    if (b.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(layer.out_channels)}) {
      throw WeightBindError("record '" + b.name + "' dims do not match layer output channels");
    }

    if (w.dtype == DType::f32 && b.dtype == DType::f32) {
      KernelF k = KernelF::zeros(layer.out_channels, in_c, layer.kh, layer.kw);
      k.weights = w.f32;
      k.bias = b.f32;
      layer.kernel = std::move(k);
    } else if (w.dtype == DType::i8 && b.dtype == DType::i32) {
      KernelQ k = KernelQ::zeros(layer.out_channels, in_c, layer.kh, layer.kw);
      k.weights = w.i8;
      k.bias = b.i32;
      layer.qkernel = std::move(k);
    } else {
      throw WeightBindError("record '" + w.name +
                            "': unsupported dtype pairing (want f32/f32 or i8/i32)");
    }
  }

  std::vector<std::string> unknown;
  for (const auto& [name, rec] : by_name) {
    if (!used.contains(name)) unknown.push_back(name);
  }
  if (!unknown.empty()) {
    std::string msg = "weight records with no matching layer:";
    for (const std::string& n : unknown) msg += " '" + n + "'";
    throw WeightBindError(msg);
  }
}

}  // namespace l3u
