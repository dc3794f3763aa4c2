#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "l3u/image_io.hpp"
#include "l3u/tensor.hpp"

namespace l3u {

/// Per-pixel class ids in [0, num_classes).
struct ClassMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const ClassMap&) const = default;
};

ClassMap classmap_from_image(const ImageU8& img, int num_classes);
ImageU8 classmap_to_image(const ClassMap& map);

/// Pixel tallies, rows = ground truth, cols = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void accumulate(const ClassMap& gt, const ClassMap& pred);
  void add(int gt, int pred, std::uint64_t count = 1);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return num_classes_; }
  std::uint64_t at(int gt, int pred) const;
  std::uint64_t total() const;

 private:
  int num_classes_;
  std::vector<std::uint64_t> counts_;
};

/// trace / total.
double pixel_accuracy(const ConfusionMatrix& cm);

/// Mean over classes of TP/(TP+FP+FN); classes with zero union (absent from
/// both gt and pred) are excluded from the mean.
double mean_iou(const ConfusionMatrix& cm);

/// Per-class IoU; NaN marks a zero-union class.
std::vector<double> per_class_iou(const ConfusionMatrix& cm);

/// CSV report: header "class,iou", one row per class (zero-union classes
/// print "excluded"), then "accuracy" and "miou" summary rows.
std::string metrics_csv(const ConfusionMatrix& cm);

// --- dataset ingestion geometry ---

struct CropRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  bool operator==(const CropRect&) const = default;
};

/// Grid starts along one axis: stride = round(crop * (1 - overlap)), final
/// start clamped to extent - crop so the crops cover every pixel.
std::vector<int> grid_starts(int extent, int crop, double overlap_fraction);

/// Full crop grid, left-to-right then top-to-bottom.
std::vector<CropRect> overlap_crop_grid(int image_w, int image_h, int crop_hw,
                                        double overlap_fraction);

std::vector<ImageU8> overlap_crop(const ImageU8& image, int crop_hw, double overlap_fraction);
std::vector<ClassMap> overlap_crop(const ClassMap& map, int crop_hw, double overlap_fraction);

ImageU8 crop(const ImageU8& image, const CropRect& r);
ClassMap crop(const ClassMap& map, const CropRect& r);

/// Nearest-neighbor rescale with pixel-center sampling:
/// src = floor((dst + 0.5) * src_size / dst_size).
ImageU8 rescale_nearest(const ImageU8& image, int out_h, int out_w);
ClassMap rescale_nearest(const ClassMap& map, int out_h, int out_w);

/// Portrait ingestion: a 600-wide, 800-tall image yields three 600x600
/// crops at y offsets {0, 100, 200}, each rescaled to 352x352.
std::array<ImageU8, 3> aisegment_crops(const ImageU8& image);
std::array<ClassMap, 3> aisegment_crops(const ClassMap& map);

/// Per-pixel argmax over channels; ties resolve to the lowest class id.
ClassMap argmax_channels(const TensorI8& logits);
ClassMap argmax_channels(const TensorF& logits);

}  // namespace l3u
