#include "l3u/arch.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace l3u {

namespace {

using nlohmann::json;

const std::map<std::string, int ArchWidths::*> kWidthFields = {
    {"stem1", &ArchWidths::stem1}, {"stem2", &ArchWidths::stem2}, {"stem3", &ArchWidths::stem3},
    {"enc0", &ArchWidths::enc0},   {"enc1", &ArchWidths::enc1},   {"enc2", &ArchWidths::enc2},
    {"enc3", &ArchWidths::enc3},   {"dec1", &ArchWidths::dec1},   {"dec2", &ArchWidths::dec2},
    {"dec3", &ArchWidths::dec3},   {"head1", &ArchWidths::head1}, {"head2", &ArchWidths::head2},
    {"head3", &ArchWidths::head3}, {"head4", &ArchWidths::head4}, {"head5", &ArchWidths::head5},
};

LayerSpec conv1x1(std::string name, std::string input, int out_channels, Activation act) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::conv2d;
  l.inputs = {std::move(input)};
  l.out_channels = out_channels;
  l.kh = l.kw = 1;
  l.stride = 1;
  l.padding = 0;
  l.activation = act;
  return l;
}

LayerSpec conv3x3(std::string name, std::string input, int out_channels) {
  LayerSpec l = conv1x1(std::move(name), std::move(input), out_channels, Activation::relu);
  l.kh = l.kw = 3;
  l.padding = 1;  // shape preserving
  return l;
}

LayerSpec upconv(std::string name, std::string input, int out_channels) {
  // Exact 2x upsampling: stride 2, kernel 3, padding 1, output_padding 1.
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::conv_transpose2d;
  l.inputs = {std::move(input)};
  l.out_channels = out_channels;
  l.kh = l.kw = 3;
  l.stride = 2;
  l.padding = 1;
  l.output_padding = 1;
  l.activation = Activation::relu;
  return l;
}

LayerSpec pool(std::string name, std::string input) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::maxpool2x2;
  l.inputs = {std::move(input)};
  return l;
}

LayerSpec concat(std::string name, std::string up, std::string skip) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::concat;
  l.inputs = {std::move(up), std::move(skip)};
  return l;
}

std::int64_t analytic_macs(const LayerSpec& layer, const Shape& out) {
  if (layer.kind != LayerKind::conv2d && layer.kind != LayerKind::conv_transpose2d) return 0;
  // Cout * Hout * Wout * Cin * kh * kw; Cin recovered from the layer later.
  return static_cast<std::int64_t>(out.c) * out.h * out.w * layer.kh * layer.kw;
}

}  // namespace

void ArchConfig::validate() const {
  if (alpha < 1) throw std::invalid_argument("arch config: alpha must be >= 1");
  if (input_channels < 1) throw std::invalid_argument("arch config: input_channels must be >= 1");
  if (num_classes != 2 && num_classes != 4) {
    throw std::invalid_argument("arch config: num_classes must be 2 or 4");
  }
  if (input_hw < 1 || input_hw % alpha != 0) {
    throw std::invalid_argument("arch config: input_hw " + std::to_string(input_hw) +
                                " not divisible by alpha " + std::to_string(alpha));
  }
  // Three pooling stages after folding need 2^3 * alpha to divide the input.
  if (input_hw % (8 * alpha) != 0) {
    throw std::invalid_argument("arch config: input_hw " + std::to_string(input_hw) +
                                " not divisible by 8*alpha = " + std::to_string(8 * alpha));
  }
  for (const auto& [name, field] : kWidthFields) {
    if (widths.*field < 1) {
      throw std::invalid_argument("arch config: width '" + name + "' must be >= 1");
    }
  }
}

ArchConfig ArchConfig::from_json(const std::string& text) {
  ArchConfig cfg;
  json j = json::parse(text);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.input_channels = j.value("input_channels", cfg.input_channels);
  cfg.input_hw = j.value("input_hw", cfg.input_hw);
  cfg.num_classes = j.value("num_classes", cfg.num_classes);
  cfg.default_output_shift = j.value("default_output_shift", cfg.default_output_shift);
  if (j.contains("widths")) {
    const json& w = j.at("widths");
    for (const auto& [key, value] : w.items()) {
      const auto it = kWidthFields.find(key);
      if (it == kWidthFields.end()) {
        throw std::invalid_argument("arch config: unknown width '" + key + "'");
      }
      cfg.widths.*(it->second) = value.get<int>();
    }
  }
  if (j.contains("output_shifts")) {
    for (const auto& [key, value] : j.at("output_shifts").items()) {
      cfg.output_shifts[key] = value.get<int>();
    }
  }
  cfg.validate();
  return cfg;
}

ArchConfig ArchConfig::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

std::string ArchConfig::to_json() const {
  json w;
  for (const auto& [name, field] : kWidthFields) w[name] = widths.*field;
  json j{{"alpha", alpha},
         {"input_channels", input_channels},
         {"input_hw", input_hw},
         {"num_classes", num_classes},
         {"default_output_shift", default_output_shift},
         {"widths", w}};
  if (!output_shifts.empty()) j["output_shifts"] = output_shifts;
  return j.dump(2);
}

ModelGraph build_l3unet(const ArchConfig& cfg) {
  cfg.validate();
  const ArchWidths& w = cfg.widths;

  ModelGraph g;
  g.input_shape = {cfg.input_channels, cfg.input_hw, cfg.input_hw};

  LayerSpec fold_layer;
  fold_layer.name = "fold";
  fold_layer.kind = LayerKind::fold;
  fold_layer.inputs = {std::string(kGraphInputName)};
  fold_layer.alpha = cfg.alpha;
  g.layers.push_back(fold_layer);

  g.layers.push_back(conv1x1("stem1", "fold", w.stem1, Activation::relu));
  g.layers.push_back(conv1x1("stem2", "stem1", w.stem2, Activation::relu));
  g.layers.push_back(conv1x1("stem3", "stem2", w.stem3, Activation::relu));
  g.layers.push_back(conv3x3("enc0", "stem3", w.enc0));

  g.layers.push_back(pool("pool1", "enc0"));
  g.layers.push_back(conv3x3("enc1", "pool1", w.enc1));
  g.layers.push_back(pool("pool2", "enc1"));
  g.layers.push_back(conv3x3("enc2", "pool2", w.enc2));
  g.layers.push_back(pool("pool3", "enc2"));
  g.layers.push_back(conv3x3("enc3", "pool3", w.enc3));

  // Skips come from the tensor immediately before each pool; the upsampled
  // tensor goes first in each concat.
  g.layers.push_back(upconv("up1", "enc3", w.dec1));
  g.layers.push_back(concat("cat1", "up1", "enc2"));
  g.layers.push_back(upconv("up2", "cat1", w.dec2));
  g.layers.push_back(concat("cat2", "up2", "enc1"));
  g.layers.push_back(upconv("up3", "cat2", w.dec3));
  g.layers.push_back(concat("cat3", "up3", "enc0"));

  g.layers.push_back(conv3x3("head1", "cat3", w.head1));
  g.layers.push_back(conv3x3("head2", "head1", w.head2));
  g.layers.push_back(conv1x1("head3", "head2", w.head3, Activation::relu));
  g.layers.push_back(conv1x1("head4", "head3", w.head4, Activation::relu));
  g.layers.push_back(conv1x1("head5", "head4", w.head5, Activation::relu));
  // Logit layer: signed outputs, no activation, alpha^2 * classes channels.
  g.layers.push_back(
      conv1x1("head6", "head5", cfg.alpha * cfg.alpha * cfg.num_classes, Activation::none));

  LayerSpec unfold_layer;
  unfold_layer.name = "unfold";
  unfold_layer.kind = LayerKind::unfold;
  unfold_layer.inputs = {"head6"};
  unfold_layer.alpha = cfg.alpha;
  g.layers.push_back(unfold_layer);

  g.output_layer = "unfold";

  for (LayerSpec& layer : g.layers) {
    if (layer.kind != LayerKind::conv2d && layer.kind != LayerKind::conv_transpose2d) continue;
    const auto it = cfg.output_shifts.find(layer.name);
    layer.output_shift = it != cfg.output_shifts.end() ? it->second : cfg.default_output_shift;
  }

  propagate_shapes(g);  // fail fast on config mistakes
  return g;
}

std::string report_architecture(const ModelGraph& g) {
  const std::vector<LayerShapes> shapes = propagate_shapes(g);
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %-17s %-12s %-14s %-14s %12s %14s\n", "layer", "kind",
                "kernel", "in", "out", "params", "macs");
  out += line;

  std::int64_t total_params = 0;
  std::int64_t total_macs = 0;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& layer = g.layers[i];
    const Shape in = shapes[i].input[0];
    const Shape outs = shapes[i].output;
    std::string kernel = "-";
    std::int64_t params = 0;
    std::int64_t macs = 0;
    if (layer.kind == LayerKind::conv2d || layer.kind == LayerKind::conv_transpose2d) {
      kernel = std::to_string(layer.kh) + "x" + std::to_string(layer.kw) + "/s" +
               std::to_string(layer.stride) + "/p" + std::to_string(layer.padding);
      params = static_cast<std::int64_t>(layer.out_channels) * (in.c * layer.kh * layer.kw) +
               layer.out_channels;
      macs = analytic_macs(layer, outs) * in.c;
    } else if (layer.kind == LayerKind::fold || layer.kind == LayerKind::unfold) {
      kernel = "a=" + std::to_string(layer.alpha);
    }
    total_params += params;
    total_macs += macs;
    std::snprintf(line, sizeof(line), "%-10s %-17s %-12s %-14s %-14s %12" PRId64 " %14" PRId64 "\n",
                  layer.name.c_str(), std::string(to_string(layer.kind)).c_str(), kernel.c_str(),
                  to_string(in).c_str(), to_string(outs).c_str(), params, macs);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-10s %-17s %-12s %-14s %-14s %12" PRId64 " %14" PRId64 "\n",
                "TOTAL", "", "", "", "", total_params, total_macs);
  out += line;
  return out;
}

}  // namespace l3u
