#include "l3u/eval.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace l3u {

namespace {

void check_same_shape(const ClassMap& a, const ClassMap& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("class maps differ in shape: " + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width));
  }
}

template <typename Map>
Map crop_impl(const Map& src, const CropRect& r, int channels) {
  if (r.x < 0 || r.y < 0 || r.w < 1 || r.h < 1 || r.x + r.w > src.width ||
      r.y + r.h > src.height) {
    throw std::invalid_argument("crop rect out of bounds");
  }
  Map dst;
  dst.height = r.h;
  dst.width = r.w;
  if constexpr (requires { dst.channels; }) {
    dst.channels = channels;
    dst.pixels.resize(static_cast<std::size_t>(r.h) * r.w * channels);
    for (int y = 0; y < r.h; ++y) {
      for (int x = 0; x < r.w; ++x) {
        for (int c = 0; c < channels; ++c) dst.at(y, x, c) = src.at(r.y + y, r.x + x, c);
      }
    }
  } else {
    (void)channels;
    dst.labels.resize(static_cast<std::size_t>(r.h) * r.w);
    for (int y = 0; y < r.h; ++y) {
      for (int x = 0; x < r.w; ++x) dst.at(y, x) = src.at(r.y + y, r.x + x);
    }
  }
  return dst;
}

inline int nearest_src(int dst, int src_size, int dst_size) {
  const int s = static_cast<int>((dst + 0.5) * static_cast<double>(src_size) / dst_size);
  return std::min(s, src_size - 1);
}

template <typename T>
ClassMap argmax_impl(const Tensor<T>& logits) {
  if (logits.channels() < 1) throw ShapeError("argmax: tensor has no channels");
  ClassMap map;
  map.height = logits.height();
  map.width = logits.width();
  map.labels.resize(static_cast<std::size_t>(map.height) * map.width);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      int best = 0;
      T best_v = logits.at(0, y, x);
      for (int c = 1; c < logits.channels(); ++c) {
        const T v = logits.at(c, y, x);
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      map.at(y, x) = static_cast<std::uint8_t>(best);
    }
  }
  return map;
}

constexpr std::array<int, 3> kPortraitOffsets = {0, 100, 200};

}  // namespace

ClassMap classmap_from_image(const ImageU8& img, int num_classes) {
  if (img.channels != 1) {
    throw std::invalid_argument("class map image must be single-channel, got " +
                                std::to_string(img.channels));
  }
  for (std::uint8_t v : img.pixels) {
    if (v >= num_classes) {
      throw std::out_of_range("label " + std::to_string(v) + " out of range for " +
                              std::to_string(num_classes) + " classes");
    }
  }
  ClassMap map;
  map.height = img.height;
  map.width = img.width;
  map.labels = img.pixels;
  return map;
}

ImageU8 classmap_to_image(const ClassMap& map) {
  ImageU8 img;
  img.height = map.height;
  img.width = map.width;
  img.channels = 1;
  img.pixels = map.labels;
  return img;
}

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
}

void ConfusionMatrix::accumulate(const ClassMap& gt, const ClassMap& pred) {
  check_same_shape(gt, pred);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    add(gt.labels[i], pred.labels[i]);
  }
}

void ConfusionMatrix::add(int gt, int pred, std::uint64_t count) {
  if (gt < 0 || gt >= num_classes_ || pred < 0 || pred >= num_classes_) {
    throw std::out_of_range("label (" + std::to_string(gt) + "," + std::to_string(pred) +
                            ") out of range for " + std::to_string(num_classes_) + " classes");
  }
  counts_[static_cast<std::size_t>(gt) * num_classes_ + pred] += count;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) {
    throw std::invalid_argument("cannot merge confusion matrices of different class counts");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::at(int gt, int pred) const {
  return counts_[static_cast<std::size_t>(gt) * num_classes_ + pred];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (std::uint64_t c : counts_) t += c;
  return t;
}

double pixel_accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t t = cm.total();
  if (t == 0) throw std::invalid_argument("pixel_accuracy: empty confusion matrix");
  std::uint64_t diag = 0;
  for (int c = 0; c < cm.num_classes(); ++c) diag += cm.at(c, c);
  return static_cast<double>(diag) / static_cast<double>(t);
}

std::vector<double> per_class_iou(const ConfusionMatrix& cm) {
  std::vector<double> iou(cm.num_classes(), std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < cm.num_classes(); ++c) {
    const std::uint64_t tp = cm.at(c, c);
    std::uint64_t fp = 0, fn = 0;
    for (int o = 0; o < cm.num_classes(); ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const std::uint64_t uni = tp + fp + fn;
    if (uni > 0) iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
  }
  return iou;
}

double mean_iou(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("mean_iou: empty confusion matrix");
  double sum = 0;
  int counted = 0;
  for (double v : per_class_iou(cm)) {
    if (!std::isnan(v)) {
      sum += v;
      ++counted;
    }
  }
  return sum / counted;  // counted >= 1 because total() > 0
}

std::string metrics_csv(const ConfusionMatrix& cm) {
  std::string out = "class,iou\n";
  char line[64];
  const std::vector<double> iou = per_class_iou(cm);
  for (int c = 0; c < cm.num_classes(); ++c) {
    if (std::isnan(iou[c])) {
      std::snprintf(line, sizeof(line), "%d,excluded\n", c);
    } else {
      std::snprintf(line, sizeof(line), "%d,%.12g\n", c, iou[c]);
    }
    out += line;
  }
  std::snprintf(line, sizeof(line), "accuracy,%.12g\n", pixel_accuracy(cm));
  out += line;
  std::snprintf(line, sizeof(line), "miou,%.12g\n", mean_iou(cm));
  out += line;
  return out;
}

std::vector<int> grid_starts(int extent, int crop, double overlap_fraction) {
  if (crop < 1 || extent < crop) {
    throw std::invalid_argument("image extent " + std::to_string(extent) +
                                " smaller than crop " + std::to_string(crop));
  }
  if (overlap_fraction < 0.0 || overlap_fraction >= 1.0) {
    throw std::invalid_argument("overlap fraction must be in [0, 1)");
  }
  const int stride = std::max(1, static_cast<int>(std::lround(crop * (1.0 - overlap_fraction))));
  std::vector<int> starts;
  for (int s = 0; s + crop <= extent; s += stride) starts.push_back(s);
  if (starts.back() != extent - crop) starts.push_back(extent - crop);
  return starts;
}

std::vector<CropRect> overlap_crop_grid(int image_w, int image_h, int crop_hw,
                                        double overlap_fraction) {
  const std::vector<int> xs = grid_starts(image_w, crop_hw, overlap_fraction);
  const std::vector<int> ys = grid_starts(image_h, crop_hw, overlap_fraction);
  std::vector<CropRect> rects;
  rects.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) rects.push_back({x, y, crop_hw, crop_hw});
  }
  return rects;
}

std::vector<ImageU8> overlap_crop(const ImageU8& image, int crop_hw, double overlap_fraction) {
  std::vector<ImageU8> out;
  for (const CropRect& r : overlap_crop_grid(image.width, image.height, crop_hw, overlap_fraction)) {
    out.push_back(crop(image, r));
  }
  return out;
}

std::vector<ClassMap> overlap_crop(const ClassMap& map, int crop_hw, double overlap_fraction) {
  std::vector<ClassMap> out;
  for (const CropRect& r : overlap_crop_grid(map.width, map.height, crop_hw, overlap_fraction)) {
    out.push_back(crop(map, r));
  }
  return out;
}

ImageU8 crop(const ImageU8& image, const CropRect& r) { return crop_impl(image, r, image.channels); }

ClassMap crop(const ClassMap& map, const CropRect& r) { return crop_impl(map, r, 1); }

ImageU8 rescale_nearest(const ImageU8& image, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("rescale target must be >= 1x1");
  ImageU8 dst;
  dst.height = out_h;
  dst.width = out_w;
  dst.channels = image.channels;
  dst.pixels.resize(static_cast<std::size_t>(out_h) * out_w * image.channels);
  for (int y = 0; y < out_h; ++y) {
    const int sy = nearest_src(y, image.height, out_h);
    for (int x = 0; x < out_w; ++x) {
      const int sx = nearest_src(x, image.width, out_w);
      for (int c = 0; c < image.channels; ++c) dst.at(y, x, c) = image.at(sy, sx, c);
    }
  }
  return dst;
}

ClassMap rescale_nearest(const ClassMap& map, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("rescale target must be >= 1x1");
  ClassMap dst;
  dst.height = out_h;
  dst.width = out_w;
  dst.labels.resize(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = nearest_src(y, map.height, out_h);
    for (int x = 0; x < out_w; ++x) {
      dst.at(y, x) = map.at(sy, nearest_src(x, map.width, out_w));
    }
  }
  return dst;
}

template <typename Map>
static std::array<Map, 3> portrait_crops(const Map& src) {
  if (src.width != 600 || src.height != 800) {
    throw std::invalid_argument("portrait input must be 600 wide and 800 tall, got " +
                                std::to_string(src.width) + "x" + std::to_string(src.height));
  }
  std::array<Map, 3> out;
  for (std::size_t i = 0; i < kPortraitOffsets.size(); ++i) {
    out[i] = rescale_nearest(crop(src, {0, kPortraitOffsets[i], 600, 600}), 352, 352);
  }
  return out;
}

std::array<ImageU8, 3> aisegment_crops(const ImageU8& image) { return portrait_crops(image); }

std::array<ClassMap, 3> aisegment_crops(const ClassMap& map) { return portrait_crops(map); }

ClassMap argmax_channels(const TensorI8& logits) { return argmax_impl(logits); }

ClassMap argmax_channels(const TensorF& logits) { return argmax_impl(logits); }

}  // namespace l3u
