// l3u: command-line surface for the data-folding toolkit.
//
// Exit codes: 0 success, 1 generic/verification failure, 2 divisibility
// error, 3 weight/graph mismatch, 4 shape failure, 5 unmatched eval files.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <CLI11.hpp>

#include "l3u/accel.hpp"
#include "l3u/arch.hpp"
#include "l3u/eval.hpp"
#include "l3u/image_io.hpp"
#include "l3u/nn.hpp"
#include "l3u/tensor.hpp"
#include "l3u/weights.hpp"

namespace fs = std::filesystem;
using namespace l3u;

int run_verify(std::uint64_t seed, int cases, const std::string& dump_dir, bool corrupt_kernel);

namespace {

int guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const DivisibilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const WeightBindError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

void check_output_path(const fs::path& p) {
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  if (!fs::exists(dir)) {
    throw std::runtime_error("output directory does not exist: " + dir.string());
  }
}

// L3UT tensors pass through untouched; PNM images map to the signed int8
// pipeline with v - 128.
AnyTensor load_input_tensor(const fs::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("cannot open " + path.string());
  char magic[4] = {};
  probe.read(magic, 4);
  probe.close();
  if (std::string_view(magic, 4) == "L3UT") return read_tensor(path);
  return AnyTensor(image_to_tensor_i8(read_pnm(path)));
}

int run_fold_cmd(const std::string& input, const std::string& output, int alpha, bool inverse) {
  check_output_path(output);
  const FoldSpec spec{alpha};
  AnyTensor t = load_input_tensor(input);
  AnyTensor result = std::visit(
      [&](const auto& x) -> AnyTensor { return inverse ? unfold(x, spec) : fold(x, spec); }, t);
  write_tensor(fs::path(output), result);
  std::cout << (inverse ? "unfolded " : "folded ") << to_string(shape(t)) << " -> "
            << to_string(shape(result)) << "\n";
  return 0;
}

int run_infer(const std::string& config_path, const std::string& weights_path,
              std::int64_t random_seed, const std::string& input_path,
              const std::string& output_path, const std::string& logits_path,
              const std::string& mode) {
  check_output_path(output_path);
  if (!logits_path.empty()) check_output_path(logits_path);

  const ArchConfig cfg = ArchConfig::from_file(config_path);
  ModelGraph g = build_l3unet(cfg);
  if (!weights_path.empty()) {
    bind_weights(g, read_weight_file(weights_path));
  } else if (random_seed >= 0) {
    randomize_weights(g, static_cast<std::uint64_t>(random_seed));
  } else {
    throw WeightBindError("need --weights FILE or --random-weights SEED");
  }

  const ImageU8 img = read_pnm(input_path);
  ClassMap pred;
  if (mode == "float") {
    for (const LayerSpec& l : g.layers) {
      if ((l.kind == LayerKind::conv2d || l.kind == LayerKind::conv_transpose2d) && !l.kernel) {
        throw WeightBindError("float mode requires float32 weight records (layer '" + l.name +
                              "' has none)");
      }
    }
    const TensorF logits = run_graph(g, image_to_tensor_f32(img));
    pred = argmax_channels(logits);
    if (!logits_path.empty()) write_tensor(fs::path(logits_path), AnyTensor(logits));
  } else {
    bool missing_q = false;
    for (const LayerSpec& l : g.layers) {
      if ((l.kind == LayerKind::conv2d || l.kind == LayerKind::conv_transpose2d) && !l.qkernel) {
        missing_q = true;
      }
    }
    if (missing_q) quantize_graph(g);
    const TensorI8 logits = run_graph(g, image_to_tensor_i8(img));
    pred = argmax_channels(logits);
    if (!logits_path.empty()) write_tensor(fs::path(logits_path), AnyTensor(logits));
  }
  write_pgm(output_path, classmap_to_image(pred));
  return 0;
}

int run_cost(const std::string& config_path, int processors, const std::string& csv_path) {
  if (!csv_path.empty()) check_output_path(csv_path);
  const ArchConfig cfg = ArchConfig::from_file(config_path);
  const ModelGraph g = build_l3unet(cfg);
  AcceleratorSpec spec;
  spec.num_processors = processors;

  const CostReport report = graph_cost_report(g, spec);
  std::cout << cost_report_table(report);

  // Load on the first conv layer when the same workload is folded at
  // alpha = 1, 2, 4 before entering it.
  const LayerSpec* first_conv = nullptr;
  for (const LayerSpec& l : g.layers) {
    if (l.kind == LayerKind::conv2d || l.kind == LayerKind::conv_transpose2d) {
      first_conv = &l;
      break;
    }
  }
  if (first_conv != nullptr) {
    std::cout << "\nfirst-layer load vs folding factor (layer '" << first_conv->name << "'):\n";
    std::printf("%-6s %8s %14s %10s\n", "alpha", "procs", "max_macs", "ratio");
    std::int64_t base = 0;
    for (int a : {1, 2, 4}) {
      if (cfg.input_hw % a != 0) continue;
      const Shape in{a * a * cfg.input_channels, cfg.input_hw / a, cfg.input_hw / a};
      const LayerCost c = layer_macs_per_processor(*first_conv, in, spec);
      if (base == 0) base = c.max_macs;
      std::printf("%-6d %8d %14lld %10.6g\n", a, c.active_processors,
                  static_cast<long long>(c.max_macs),
                  static_cast<double>(c.max_macs) / static_cast<double>(base));
    }
  }

  if (!csv_path.empty()) {
    std::ofstream os(csv_path, std::ios::binary);
    os << cost_report_csv(report);
    if (!os) throw std::runtime_error("cannot write " + csv_path);
  }
  return 0;
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir, int classes) {
  std::map<std::string, fs::path> preds, gts;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (e.path().extension() == ".pgm") preds[e.path().filename().string()] = e.path();
  }
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.path().extension() == ".pgm") gts[e.path().filename().string()] = e.path();
  }
  std::vector<std::string> unmatched;
  for (const auto& [name, p] : preds) {
    if (!gts.contains(name)) unmatched.push_back(name + " (prediction only)");
  }
  for (const auto& [name, p] : gts) {
    if (!preds.contains(name)) unmatched.push_back(name + " (ground truth only)");
  }
  if (!unmatched.empty()) {
    std::sort(unmatched.begin(), unmatched.end());
    std::cerr << "unmatched files:\n";
    for (const std::string& n : unmatched) std::cerr << "  " << n << "\n";
    return 5;
  }
  if (preds.empty()) throw std::runtime_error("no .pgm files to evaluate");

  std::vector<std::string> names;
  for (const auto& [name, p] : preds) names.push_back(name);  // std::map: already sorted

  int threads = 1;
  if (const char* env = std::getenv("L3U_THREADS")) {
    threads = std::clamp(std::atoi(env), 1, 64);
  }
  threads = std::min<int>(threads, static_cast<int>(names.size()));

  // Per-worker matrices merged at the end; accumulation is order-independent.
  std::vector<ConfusionMatrix> partial(threads, ConfusionMatrix(classes));
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::string fail_msg;
  std::mutex fail_mu;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (std::size_t i = t; i < names.size(); i += threads) {
          const ClassMap gt = classmap_from_image(read_pnm(gts.at(names[i])), classes);
          const ClassMap pred = classmap_from_image(read_pnm(preds.at(names[i])), classes);
          partial[t].accumulate(gt, pred);
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(fail_mu);
        failed = true;
        fail_msg = e.what();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failed) throw std::runtime_error(fail_msg);

  ConfusionMatrix cm(classes);
  for (const ConfusionMatrix& p : partial) cm.merge(p);
  std::cout << metrics_csv(cm);
  return 0;
}

int run_crop(const std::string& dataset, const std::string& input_path,
             const std::string& mask_path, const std::string& out_dir, int crop_size,
             double overlap) {
  const ImageU8 img = read_pnm(input_path);
  ImageU8 mask;
  if (!mask_path.empty()) {
    mask = read_pnm(mask_path);
    if (mask.channels != 1) throw std::runtime_error("mask must be a PGM (single channel)");
    if (mask.height != img.height || mask.width != img.width) {
      throw ShapeError("mask dims do not match image dims");
    }
  }
  const std::string stem = fs::path(input_path).stem().string();
  char name[256];
  int written = 0;

  if (dataset == "camvid") {
    for (const CropRect& r : overlap_crop_grid(img.width, img.height, crop_size, overlap)) {
      std::snprintf(name, sizeof(name), "%s_y%04d_x%04d", stem.c_str(), r.y, r.x);
      write_ppm(fs::path(out_dir) / (std::string(name) + ".ppm"), crop(img, r));
      if (!mask_path.empty()) {
        write_pgm(fs::path(out_dir) / (std::string(name) + ".pgm"), crop(mask, r));
      }
      ++written;
    }
  } else {
    const std::array<ImageU8, 3> crops = aisegment_crops(img);
    std::array<ImageU8, 3> mask_crops;
    if (!mask_path.empty()) mask_crops = aisegment_crops(mask);
    for (int i = 0; i < 3; ++i) {
      std::snprintf(name, sizeof(name), "%s_crop%d", stem.c_str(), i);
      write_ppm(fs::path(out_dir) / (std::string(name) + ".ppm"), crops[i]);
      if (!mask_path.empty()) {
        write_pgm(fs::path(out_dir) / (std::string(name) + ".pgm"), mask_crops[i]);
      }
      ++written;
    }
  }
  std::cout << "wrote " << written << " crops to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"L3U-net data folding, inference and evaluation toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  // fold / unfold
  std::string in_path, out_path;
  int alpha = 4;
  auto* fold_cmd = app.add_subcommand("fold", "Fold a tensor or PNM image (space-to-depth)");
  fold_cmd->add_option("--input", in_path, "L3UT tensor or PPM/PGM image")
      ->required()
      ->check(CLI::ExistingFile);
  fold_cmd->add_option("--alpha", alpha, "folding factor")->required();
  fold_cmd->add_option("--output", out_path, "output L3UT tensor")->required();
  fold_cmd->callback(
      [&]() { rc = guarded([&]() { return run_fold_cmd(in_path, out_path, alpha, false); }); });

  auto* unfold_cmd = app.add_subcommand("unfold", "Invert a fold");
  unfold_cmd->add_option("--input", in_path, "L3UT tensor")->required()->check(CLI::ExistingFile);
  unfold_cmd->add_option("--alpha", alpha, "folding factor")->required();
  unfold_cmd->add_option("--output", out_path, "output L3UT tensor")->required();
  unfold_cmd->callback(
      [&]() { rc = guarded([&]() { return run_fold_cmd(in_path, out_path, alpha, true); }); });

  // infer
  std::string config_path, weights_path, logits_path, mode = "quant";
  std::int64_t random_seed = -1;
  auto* infer_cmd = app.add_subcommand("infer", "Run the model on a PPM image");
  infer_cmd->add_option("--model-config", config_path, "architecture config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  auto* wopt =
      infer_cmd->add_option("--weights", weights_path, "L3UW weight file")->check(CLI::ExistingFile);
  infer_cmd->add_option("--random-weights", random_seed, "fill weights deterministically from seed")
      ->excludes(wopt);
  infer_cmd->add_option("--input", in_path, "input PPM image")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--output", out_path, "output PGM class map")->required();
  infer_cmd->add_option("--logits", logits_path, "optional L3UT logits dump");
  infer_cmd->add_option("--mode", mode, "float|quant")->check(CLI::IsMember({"float", "quant"}));
  infer_cmd->callback([&]() {
    rc = guarded([&]() {
      return run_infer(config_path, weights_path, random_seed, in_path, out_path, logits_path,
                       mode);
    });
  });

  // verify
  std::uint64_t seed = 0;
  int cases = 100;
  std::string dump_dir = ".";
  bool corrupt_kernel = false;
  auto* verify_cmd = app.add_subcommand("verify", "Randomized self-checks of the core properties");
  verify_cmd->add_option("--seed", seed, "RNG seed");
  verify_cmd->add_option("--cases", cases, "cases per property");
  verify_cmd->add_option("--dump-dir", dump_dir, "where to dump counterexample tensors");
  verify_cmd->add_flag("--hook-corrupt-kernel", corrupt_kernel)->group("");  // negative-control hook
  verify_cmd->callback(
      [&]() { rc = guarded([&]() { return run_verify(seed, cases, dump_dir, corrupt_kernel); }); });

  // cost
  int processors = 64;
  std::string csv_path;
  auto* cost_cmd = app.add_subcommand("cost", "Channel-parallel cost report for a model config");
  cost_cmd->add_option("--model-config", config_path, "architecture config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cost_cmd->add_option("--processors", processors, "parallel processor count");
  cost_cmd->add_option("--csv", csv_path, "write per-layer CSV report here");
  cost_cmd->callback(
      [&]() { rc = guarded([&]() { return run_cost(config_path, processors, csv_path); }); });

  // eval
  std::string pred_dir, gt_dir;
  int classes = 4;
  auto* eval_cmd = app.add_subcommand("eval", "Segmentation metrics over paired PGM directories");
  eval_cmd->add_option("--pred-dir", pred_dir, "predicted class maps")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--gt-dir", gt_dir, "ground-truth class maps")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--classes", classes, "number of classes")->required();
  eval_cmd->callback([&]() { rc = guarded([&]() { return run_eval(pred_dir, gt_dir, classes); }); });

  // crop
  std::string dataset, mask_path, out_dir;
  int crop_size = 352;
  double overlap = 0.40;
  auto* crop_cmd = app.add_subcommand("crop", "Deterministic dataset crop grids");
  crop_cmd->add_option("--dataset", dataset, "camvid|aisegment")
      ->required()
      ->check(CLI::IsMember({"camvid", "aisegment"}));
  crop_cmd->add_option("--input", in_path, "input PPM image")->required()->check(CLI::ExistingFile);
  crop_cmd->add_option("--mask", mask_path, "paired PGM mask")->check(CLI::ExistingFile);
  crop_cmd->add_option("--output-dir", out_dir, "directory for crops")
      ->required()
      ->check(CLI::ExistingDirectory);
  crop_cmd->add_option("--crop-size", crop_size, "square crop side");
  crop_cmd->add_option("--overlap", overlap, "overlap fraction in [0,1)");
  crop_cmd->callback([&]() {
    rc = guarded(
        [&]() { return run_crop(dataset, in_path, mask_path, out_dir, crop_size, overlap); });
  });

  CLI11_PARSE(app, argc, argv);
  return rc;
}
