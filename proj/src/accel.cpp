#include "l3u/accel.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>

namespace l3u {

ChannelAssignment assign_channels(int in_channels, const AcceleratorSpec& spec) {
  if (in_channels < 1) throw std::invalid_argument("assign_channels: cin must be >= 1");
  if (spec.num_processors < 1) {
    throw std::invalid_argument("assign_channels: num_processors must be >= 1");
  }
  ChannelAssignment a;
  a.channels_per_processor.assign(spec.num_processors, 0);
  for (int i = 0; i < spec.num_processors; ++i) {
    const int remaining = in_channels - i;
    if (remaining > 0) {
      a.channels_per_processor[i] = (remaining + spec.num_processors - 1) / spec.num_processors;
    }
  }
  a.active_processors =
      static_cast<int>(std::count_if(a.channels_per_processor.begin(),
                                     a.channels_per_processor.end(), [](int c) { return c > 0; }));
  return a;
}

LayerCost layer_macs_per_processor(const LayerSpec& layer, const Shape& in_shape,
                                   const AcceleratorSpec& spec) {
  LayerCost cost;
  cost.layer_name = layer.name;
  cost.kind = layer.kind;

  if (layer.kind == LayerKind::maxpool2x2) {
    // 3 comparisons per 2x2 window; no multiplications.
    cost.comparisons = static_cast<std::int64_t>(in_shape.c) * (in_shape.h / 2) * (in_shape.w / 2) * 3;
    return cost;
  }
  if (layer.kind != LayerKind::conv2d && layer.kind != LayerKind::conv_transpose2d) {
    return cost;  // no MAC accounting for this kind
  }

  cost.mac_modeled = true;
  const Shape out = layer_output_shape(layer, {in_shape});
  const std::int64_t per_channel =
      static_cast<std::int64_t>(out.h) * out.w * out.c * layer.kh * layer.kw;
  const ChannelAssignment assignment = assign_channels(in_shape.c, spec);
  cost.active_processors = assignment.active_processors;
  cost.macs_per_processor.resize(assignment.channels_per_processor.size());
  for (std::size_t i = 0; i < cost.macs_per_processor.size(); ++i) {
    cost.macs_per_processor[i] = assignment.channels_per_processor[i] * per_channel;
    cost.max_macs = std::max(cost.max_macs, cost.macs_per_processor[i]);
    cost.total_macs += cost.macs_per_processor[i];
  }
  return cost;
}

CostReport graph_cost_report(const ModelGraph& g, const AcceleratorSpec& spec) {
  CostReport report;
  report.weight_budget_bytes = spec.weight_memory_bytes;
  if (!g.layers.empty()) {
    const std::vector<LayerShapes> shapes = propagate_shapes(g);
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
      LayerCost cost = layer_macs_per_processor(g.layers[i], shapes[i].input[0], spec);
      report.total_macs += cost.total_macs;
      report.latency_proxy_macs += cost.max_macs;
      report.layers.push_back(std::move(cost));
    }
    report.weight_bytes = param_count(g) * spec.bytes_per_weight;
  }
  report.within_budget = report.weight_bytes <= report.weight_budget_bytes;
  return report;
}

std::string cost_report_csv(const CostReport& report) {
  std::string out = "name,kind,active_processors,max_macs,total_macs\n";
  char line[192];
  for (const LayerCost& c : report.layers) {
    std::snprintf(line, sizeof(line), "%s,%s,%d,%" PRId64 ",%" PRId64 "\n", c.layer_name.c_str(),
                  std::string(to_string(c.kind)).c_str(), c.active_processors, c.max_macs,
                  c.total_macs);
    out += line;
  }
  return out;
}

std::string cost_report_table(const CostReport& report) {
  std::string out;
  char line[192];
  std::snprintf(line, sizeof(line), "%-10s %-17s %8s %14s %16s\n", "layer", "kind", "procs",
                "max_macs", "total_macs");
  out += line;
  for (const LayerCost& c : report.layers) {
    std::snprintf(line, sizeof(line), "%-10s %-17s %8d %14" PRId64 " %16" PRId64 "\n",
                  c.layer_name.c_str(), std::string(to_string(c.kind)).c_str(),
                  c.active_processors, c.max_macs, c.total_macs);
    out += line;
  }
  std::snprintf(line, sizeof(line), "total MACs:          %" PRId64 "\n", report.total_macs);
  out += line;
  std::snprintf(line, sizeof(line), "latency proxy MACs:  %" PRId64 " (sum of per-layer maxima)\n",
                report.latency_proxy_macs);
  out += line;
  std::snprintf(line, sizeof(line), "weight memory:       %" PRId64 " / %" PRId64 " bytes [%s]\n",
                report.weight_bytes, report.weight_budget_bytes,
                report.within_budget ? "PASS" : "FAIL");
  out += line;
  return out;
}

}  // namespace l3u
