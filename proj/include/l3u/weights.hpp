#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "l3u/nn.hpp"

namespace l3u {

/// Weight record name does not bind to the graph (missing, extra, wrong
/// dtype or wrong dims).
struct WeightBindError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One named array from an L3UW file. Raw payload is little-endian.
struct WeightRecord {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;         // dtype f32
  std::vector<std::int8_t> i8;    // dtype i8
  std::vector<std::int32_t> i32;  // dtype i32

  std::uint64_t element_count() const;
};

// L3UW format: magic "L3UW", version byte (1), u32 LE record count, then per
// record: u16 LE name length, UTF-8 name, dtype byte, rank byte, u32 LE dims,
// raw little-endian data. Conv layers bind "<name>.weight" (rank 4,
// out/in/kh/kw) and "<name>.bias" (rank 1).

std::vector<WeightRecord> read_weight_file(const std::filesystem::path& path);
void write_weight_file(const std::filesystem::path& path, const std::vector<WeightRecord>& records);

enum class WeightMode { float32, quantized };

/// Serializes every conv layer's bound kernel. float32 writes f32
/// weight/bias pairs; quantized writes i8 weights with i32 bias.
std::vector<WeightRecord> collect_weights(const ModelGraph& g, WeightMode mode);

/// Binds records onto conv layers by name. Every conv layer must receive a
/// weight and a bias record of consistent dtype and matching dims; unbound
/// or unknown records are an error listing the offending names.
void bind_weights(ModelGraph& g, const std::vector<WeightRecord>& records);

}  // namespace l3u
