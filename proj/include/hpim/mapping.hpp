#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpim/arch.hpp"
#include "hpim/workload.hpp"

namespace hpim {

// One hybrid-parallelism round: heads [h_begin, h_begin + h_p) each spread
// over n_ch channels; dimension i of head h lives on channel
// (h - h_begin) * n_ch + (i % n_ch).
struct AllocRound {
  std::int64_t h_begin = 0;
  std::int64_t h_p = 0;   // heads placed (power of two)
  std::int64_t n_ch = 0;  // channels per head
};

struct HeadAllocation {
  std::int64_t n_heads = 0;
  std::int64_t n_channels = 0;
  std::int64_t d_k = 0;
  std::vector<AllocRound> rounds;

  std::int32_t round_of_head(std::int64_t h) const;
  std::int32_t channel_of(std::int64_t h, std::int64_t dim) const;
  // Dimensions of head h stored on channel ch (ordered ascending).
  std::vector<std::int64_t> dims_on_channel(std::int64_t h, std::int64_t ch) const;
  std::int64_t dims_count_on_channel(std::int64_t h, std::int64_t ch) const;
};

struct WeightSlicePlan {
  std::int64_t rows = 0, cols = 0;
  std::int64_t n_channels = 0;
  std::int64_t banks_per_channel = 0;
  std::int64_t page_bytes = 0;
  std::int64_t elem_bytes = 2;

  // Row j lives on channel j % n_channels.
  std::int64_t rows_on_channel(std::int64_t ch) const;
  std::int64_t elems_on_channel(std::int64_t ch) const { return rows_on_channel(ch) * cols; }
  std::int64_t bytes_on_channel(std::int64_t ch) const { return elems_on_channel(ch) * elem_bytes; }
  // Pages a channel's share occupies per bank run (layout bookkeeping).
  std::int64_t pages_per_row() const { return ceil_div(cols * elem_bytes, page_bytes); }
};

struct CorePhase {
  std::int64_t h_begin = 0;
  std::int64_t n_heads = 0;    // heads in this phase
  std::int64_t tp_degree = 1;  // cores per head
};

struct CoreAssignment {
  std::int64_t n_heads = 0;
  std::int64_t n_cores = 0;
  std::vector<CorePhase> phases;

  std::int32_t phase_of_head(std::int64_t h) const;
  // Cores of head h: [first_core, first_core + tp_degree).
  std::int32_t first_core_of(std::int64_t h) const;
  std::int64_t tp_of_head(std::int64_t h) const;
};

enum class Phase : std::uint8_t { Prefill, Decode };

struct MappingPlan {
  Phase phase = Phase::Decode;
  HeadAllocation qkv;  // identical structure for Q, K and V
  WeightSlicePlan proj, ffn1, ffn2;
  CoreAssignment cores;
  std::vector<std::int64_t> residency_bytes;  // per channel, decode weights
};

struct PlanCheckReport {
  bool ok = true;
  std::vector<std::string> violations;
  double qkv_imbalance_ratio = 1.0;  // max/mean per-channel QKV elements
};

HeadAllocation allocate_qkv_heads(std::int64_t n_heads, std::int64_t n_channels,
                                  std::int64_t n_cores, std::int64_t d_emb);
WeightSlicePlan slice_fc_weights(std::int64_t rows, std::int64_t cols, std::int64_t n_channels,
                                 std::int64_t banks_per_channel, std::int64_t page_bytes,
                                 std::int64_t elem_bytes = 2);
CoreAssignment assign_heads_to_cores(std::int64_t n_heads, std::int64_t n_cores);
MappingPlan build_mapping_plan(const ModelConfig& m, const HardwareConfig& hw, Phase phase);
PlanCheckReport validate_plan(const MappingPlan& plan);

}  // namespace hpim
