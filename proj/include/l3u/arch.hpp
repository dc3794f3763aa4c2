#pragma once

#include <map>
#include <string>

#include "l3u/nn.hpp"

namespace l3u {

/// Per-stage channel widths. Fig-6-style stages: three 1x1 stem convs, a
/// 3x3 stem conv producing the first skip tensor (enc0), three
/// pool-then-conv encoder stages, three transposed-conv decoder stages and
/// five head convs before the class-logit layer.
struct ArchWidths {
  int stem1 = 64;
  int stem2 = 48;
  int stem3 = 48;
  int enc0 = 64;
  int enc1 = 64;
  int enc2 = 56;
  int enc3 = 64;
  int dec1 = 32;
  int dec2 = 32;
  int dec3 = 32;
  int head1 = 48;
  int head2 = 48;
  int head3 = 48;
  int head4 = 48;
  int head5 = 32;

  bool operator==(const ArchWidths&) const = default;
};

struct ArchConfig {
  int alpha = 4;
  int input_channels = 3;
  int input_hw = 352;
  int num_classes = 4;  // 2 or 4
  ArchWidths widths;
  int default_output_shift = 7;
  std::map<std::string, int> output_shifts;  // per-layer overrides

  /// Throws std::invalid_argument when folding or pooling geometry cannot
  /// work (input_hw must divide by alpha and by 8*alpha; classes 2 or 4).
  void validate() const;

  static ArchConfig from_json(const std::string& text);
  static ArchConfig from_file(const std::filesystem::path& path);
  std::string to_json() const;
};

/// Builds the folded U-net graph: Fold -> 1x1 x3 -> 3x3 -> [pool, 3x3] x3
/// -> [transpose-conv, concat skip] x3 -> 3x3 x2 -> 1x1 x4 -> Unfold. The
/// last conv emits alpha^2 * num_classes channels without activation.
ModelGraph build_l3unet(const ArchConfig& cfg);

/// Per-layer text table: kind, kernel, shapes, params, MACs, plus totals.
std::string report_architecture(const ModelGraph& g);

}  // namespace l3u
