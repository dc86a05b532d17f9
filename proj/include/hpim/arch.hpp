#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpim/common.hpp"

namespace hpim {

struct SramCoreConfig {
  std::int64_t tcu_rows = 64;
  std::int64_t tcu_cols = 64;
  std::int64_t vcu_lanes = 64;
  std::int64_t pim_mgs = 16;           // macro groups
  std::int64_t macros_per_mg = 16;
  std::int64_t macro_bytes = 4096;
  std::int64_t mults_per_macro = 8;
  std::int64_t act_mem_bytes = 384 * 1024;
  std::int64_t temp_mem_bytes = 32 * 1024;
  std::int64_t freq_hz = 1'000'000'000;

  std::int64_t pim_macs_per_cycle() const { return pim_mgs * macros_per_mg * mults_per_macro; }
  std::int64_t pim_bytes() const { return pim_mgs * macros_per_mg * macro_bytes; }
};

struct HbmStackConfig {
  std::int64_t dies_per_stack = 8;
  std::int64_t gbits_per_die = 24;     // binary gigabits
  std::int64_t channels_per_die = 2;
  std::int64_t pch_per_channel = 2;
  std::int64_t bg_per_channel = 8;
  std::int64_t banks_per_bg = 4;
  std::int64_t page_bytes_per_pch = 1024;
  std::int64_t mults_per_pu = 16;
  std::int64_t global_buffer_bytes_per_pch = 1024;
  std::int64_t freq_hz = 1'000'000'000;
  std::int64_t ext_bw_bytes_per_s = 819'000'000'000;  // per stack
  std::int64_t t_act_cycles = 30;
  std::int64_t t_bcast_bytes_per_cycle = 32;  // global-buffer fill rate per pCH

  std::int64_t banks_per_pch() const { return bg_per_channel * banks_per_bg / pch_per_channel; }
};

// Cost-model parameters the source hardware description leaves open.
struct CostModelParams {
  std::int64_t pim_write_bw_bytes_per_cycle = 64;
  std::int64_t transpose_width = 64;  // elements per cycle
  std::int64_t softmax_passes = 5;
  std::int64_t layernorm_passes = 5;
  std::int64_t gelu_passes = 8;
  std::int64_t resadd_passes = 1;
};

// Comparison device declared inside the hardware document.
struct BaselineSpec {
  std::string name;
  double peak_flops = 0;
  double mem_bw_bytes_per_s = 0;
  double efficiency = 1.0;
};

struct HardwareConfig {
  std::string name = "hpim-default";
  std::int64_t n_cores = 32;
  std::int64_t n_stacks = 4;
  SramCoreConfig core;
  HbmStackConfig stack;
  std::int64_t noc_hop_cycles = 32;       // all-gather alpha
  std::int64_t noc_bytes_per_cycle = 64;  // all-gather 1/beta
  std::int64_t dispatch_overhead_cycles = 32;
  // link_map[c] = channels directly accessed by core c; default contiguous.
  std::vector<std::vector<std::int32_t>> link_map;
  CostModelParams params;
  std::vector<BaselineSpec> baselines;

  std::int64_t n_channels() const { return n_stacks * stack.dies_per_stack * stack.channels_per_die; }
  std::int64_t n_pch() const { return n_channels() * stack.pch_per_channel; }
  std::int64_t n_banks() const {
    return n_stacks * stack.dies_per_stack * stack.channels_per_die * stack.bg_per_channel *
           stack.banks_per_bg;
  }
  // Exact per-link bandwidth in milli-bytes per cycle (integer math in timing).
  std::int64_t link_bw_milli_bytes_per_cycle() const {
    return n_stacks * stack.ext_bw_bytes_per_s * 1000 / (stack.freq_hz * n_cores);
  }
};

struct DerivedMetrics {
  double tcu_peak_flops = 0;
  double pimunit_peak_flops_per_core = 0;
  double pimunit_peak_flops_total = 0;
  double hbm_pim_peak_flops = 0;
  std::int64_t sram_capacity_bytes = 0;
  std::int64_t dram_capacity_bytes = 0;
  double dram_ext_bw = 0;       // bytes/s
  double dram_internal_bw = 0;  // bytes/s, derived (datasheet figure differs; see validate)
  std::int64_t n_channels = 0;
  std::int64_t n_pch = 0;
  std::int64_t n_banks = 0;
};

enum class ResourceKind : std::uint8_t { TCU, VCU, PIMUnit, TransposeUnit, TransferUnit, PCH, Link, NoC };
inline constexpr int kUnitsPerCore = 5;

struct ResourceInfo {
  std::int32_t id = 0;
  ResourceKind kind = ResourceKind::TCU;
  std::int32_t index = 0;  // core / pCH / link index within the kind
  std::string name;
};

HardwareConfig load_hardware_config(const std::string& json_text);
void validate_config(HardwareConfig& hw);  // fills default link_map, checks invariants
DerivedMetrics derive_metrics(const HardwareConfig& hw);
std::vector<ResourceInfo> enumerate_resources(const HardwareConfig& hw);

// Stable resource ids (scheduler indices). Layout: per core 5 units, then
// pCHs, then links, then the NoC.
inline std::int32_t res_core_unit(const HardwareConfig&, std::int32_t core, ResourceKind unit) {
  return core * kUnitsPerCore + static_cast<std::int32_t>(unit);
}
inline std::int32_t res_pch(const HardwareConfig& hw, std::int32_t pch) {
  return static_cast<std::int32_t>(hw.n_cores) * kUnitsPerCore + pch;
}
inline std::int32_t res_link(const HardwareConfig& hw, std::int32_t core) {
  return static_cast<std::int32_t>(hw.n_cores * kUnitsPerCore + hw.n_pch()) + core;
}
inline std::int32_t res_noc(const HardwareConfig& hw) {
  return static_cast<std::int32_t>(hw.n_cores * kUnitsPerCore + hw.n_pch() + hw.n_cores);
}
inline std::int32_t total_resources(const HardwareConfig& hw) {
  return static_cast<std::int32_t>(hw.n_cores * kUnitsPerCore + hw.n_pch() + hw.n_cores + 1);
}

}  // namespace hpim
