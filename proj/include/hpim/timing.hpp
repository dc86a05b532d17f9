#pragma once

#include <cstdint>

#include "hpim/arch.hpp"
#include "hpim/workload.hpp"

namespace hpim {

// All costs are integer cycle counts. Per-task dispatch overhead applies to
// the SRAM-side units and links (instruction-issued); pCH tasks and NoC
// exchanges are exact totals without it.

std::int64_t tcu_gemm_cycles(std::int64_t M, std::int64_t K, std::int64_t N,
                             const SramCoreConfig& core, std::int64_t dispatch);

struct PimUnitCost {
  std::int64_t compute = 0;
  std::int64_t writes = 0;
  std::int64_t dispatch = 0;
  std::int64_t total() const { return compute + writes + dispatch; }
};
// Throws CapacityError when rows*cols*elem_bytes exceeds macro capacity
// (callers tile the sequence axis).
PimUnitCost pimunit_gemv_cost(std::int64_t rows, std::int64_t cols, std::int64_t write_bytes,
                              const SramCoreConfig& core, const CostModelParams& p,
                              std::int64_t dispatch, std::int64_t elem_bytes = 2);
std::int64_t pimunit_gemv_cycles(std::int64_t rows, std::int64_t cols, std::int64_t write_bytes,
                                 const SramCoreConfig& core, const CostModelParams& p,
                                 std::int64_t dispatch, std::int64_t elem_bytes = 2);

std::int64_t vcu_cycles(OpKind kind, std::int64_t elements, std::int64_t tp_degree,
                        const SramCoreConfig& core, const CostModelParams& p,
                        std::int64_t dispatch);

std::int64_t transpose_cycles(std::int64_t rows, std::int64_t cols, const CostModelParams& p,
                              std::int64_t dispatch);

std::int64_t noc_allgather_cycles(std::int64_t group, std::int64_t bytes,
                                  const HardwareConfig& hw);

struct HbmGemvCost {
  std::int64_t broadcast = 0;
  std::int64_t compute = 0;
  std::int64_t activations = 0;
  std::int64_t total() const { return broadcast + compute + activations; }
};
// include_input_act: the first slice of a matrix on a pCH activates the rows
// holding the input vector too; later slices touch weight rows only and skip
// the broadcast (their input re-stream overlaps earlier compute).
HbmGemvCost hbm_gemv_cost(std::int64_t elements_on_pch, std::int64_t input_len,
                          const HbmStackConfig& stack, std::int64_t elem_bytes,
                          bool first_slice = true);
std::int64_t hbm_gemv_cycles(std::int64_t elements_on_pch, std::int64_t input_len,
                             const HbmStackConfig& stack, std::int64_t elem_bytes = 2);

std::int64_t link_transfer_cycles(std::int64_t bytes, std::int64_t link_bw_milli_bytes_per_cycle,
                                  std::int64_t dispatch);

// Transfer-unit (core-side DMA) cost for moving bytes between link and local
// memories.
std::int64_t transfer_unit_cycles(std::int64_t bytes, const CostModelParams& p,
                                  std::int64_t dispatch);

}  // namespace hpim
