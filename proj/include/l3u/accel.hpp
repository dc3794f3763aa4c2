#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "l3u/nn.hpp"

namespace l3u {

/// Channel-parallel accelerator parameters. Defaults model a 64-processor
/// part with a 442 KB 8-bit weight memory.
struct AcceleratorSpec {
  int num_processors = 64;
  std::int64_t weight_memory_bytes = 442 * 1024;
  int bytes_per_weight = 1;
};

/// Round-robin input-channel to processor assignment: processor i holds
/// ceil((cin - i) / P) channels, so one channel each while cin <= P.
struct ChannelAssignment {
  std::vector<int> channels_per_processor;  // length = num_processors
  int active_processors = 0;
};

ChannelAssignment assign_channels(int in_channels, const AcceleratorSpec& spec);

struct LayerCost {
  std::string layer_name;
  LayerKind kind = LayerKind::conv2d;
  bool mac_modeled = false;  // false: kind carries no multiplications
  int active_processors = 0;
  std::vector<std::int64_t> macs_per_processor;
  std::int64_t max_macs = 0;
  std::int64_t total_macs = 0;
  std::int64_t comparisons = 0;  // pooling metadata, not MACs
};

/// Per-processor multiplication loads for one layer: each processor does
/// (channels held) * Hout * Wout * Cout * kh * kw MACs. Pool/concat/fold
/// kinds report zero MACs (pooling fills `comparisons`).
LayerCost layer_macs_per_processor(const LayerSpec& layer, const Shape& in_shape,
                                   const AcceleratorSpec& spec);

struct CostReport {
  std::vector<LayerCost> layers;
  std::int64_t total_macs = 0;
  std::int64_t latency_proxy_macs = 0;  // sum over layers of max per-processor MACs
  std::int64_t weight_bytes = 0;
  std::int64_t weight_budget_bytes = 0;
  bool within_budget = true;
};

CostReport graph_cost_report(const ModelGraph& g, const AcceleratorSpec& spec);

/// Machine contract: one row per layer,
/// name,kind,active_processors,max_macs,total_macs.
std::string cost_report_csv(const CostReport& report);

/// Human-readable table with totals, latency proxy and the budget line.
std::string cost_report_table(const CostReport& report);

}  // namespace l3u
