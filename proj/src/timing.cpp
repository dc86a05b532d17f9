#include "hpim/timing.hpp"

namespace hpim {

std::int64_t tcu_gemm_cycles(std::int64_t M, std::int64_t K, std::int64_t N,
                             const SramCoreConfig& core, std::int64_t dispatch) {
  if (M <= 0 || K <= 0 || N <= 0) return dispatch;
  // Output-stationary tiling; each tile pays the fill+drain skew once.
  return ceil_div(M, core.tcu_rows) * ceil_div(N, core.tcu_cols) *
             (K + core.tcu_rows + core.tcu_cols - 1) +
         dispatch;
}

PimUnitCost pimunit_gemv_cost(std::int64_t rows, std::int64_t cols, std::int64_t write_bytes,
                              const SramCoreConfig& core, const CostModelParams& p,
                              std::int64_t dispatch, std::int64_t elem_bytes) {
  const std::int64_t elems = rows * cols;
  if (elems * elem_bytes > core.pim_bytes()) {
    throw CapacityError("pim unit invocation of " + std::to_string(elems * elem_bytes) +
                        " B exceeds macro capacity " + std::to_string(core.pim_bytes()) +
                        " B; tile the sequence axis");
  }
  PimUnitCost c;
  c.compute = ceil_div(elems, core.pim_macs_per_cycle());
  c.writes = ceil_div(write_bytes, p.pim_write_bw_bytes_per_cycle);
  c.dispatch = dispatch;
  return c;
}

std::int64_t pimunit_gemv_cycles(std::int64_t rows, std::int64_t cols, std::int64_t write_bytes,
                                 const SramCoreConfig& core, const CostModelParams& p,
                                 std::int64_t dispatch, std::int64_t elem_bytes) {
  return pimunit_gemv_cost(rows, cols, write_bytes, core, p, dispatch, elem_bytes).total();
}

std::int64_t vcu_cycles(OpKind kind, std::int64_t elements, std::int64_t tp_degree,
                        const SramCoreConfig& core, const CostModelParams& p,
                        std::int64_t dispatch) {
  std::int64_t passes;
  switch (kind) {
    case OpKind::Softmax: passes = p.softmax_passes; break;
    case OpKind::LayerNorm: passes = p.layernorm_passes; break;
    case OpKind::GELU: passes = p.gelu_passes; break;
    case OpKind::ResAdd: passes = p.resadd_passes; break;
    default: throw ConfigError(std::string("vcu_cycles: not an element-wise kind: ") + to_string(kind));
  }
  if (elements <= 0) return dispatch;
  return passes * ceil_div(elements, tp_degree * core.vcu_lanes) + dispatch;
}

std::int64_t transpose_cycles(std::int64_t rows, std::int64_t cols, const CostModelParams& p,
                              std::int64_t dispatch) {
  if (rows <= 0 || cols <= 0) return dispatch;
  return ceil_div(rows * cols, p.transpose_width) + dispatch;
}

std::int64_t noc_allgather_cycles(std::int64_t group, std::int64_t bytes,
                                  const HardwareConfig& hw) {
  if (group <= 1) return 0;
  return ceil_log2(group) * (hw.noc_hop_cycles + ceil_div(bytes, hw.noc_bytes_per_cycle));
}

HbmGemvCost hbm_gemv_cost(std::int64_t elements_on_pch, std::int64_t input_len,
                          const HbmStackConfig& stack, std::int64_t elem_bytes,
                          bool first_slice) {
  HbmGemvCost c;
  if (first_slice) c.broadcast = ceil_div(input_len * elem_bytes, stack.t_bcast_bytes_per_cycle);
  if (elements_on_pch > 0) {
    c.compute = ceil_div(elements_on_pch, stack.banks_per_pch() * stack.mults_per_pu);
    const std::int64_t touched = first_slice ? elements_on_pch + input_len : elements_on_pch;
    c.activations = ceil_div(touched * elem_bytes, stack.banks_per_pch() * stack.page_bytes_per_pch) *
                    stack.t_act_cycles;
  }
  return c;
}

std::int64_t hbm_gemv_cycles(std::int64_t elements_on_pch, std::int64_t input_len,
                             const HbmStackConfig& stack, std::int64_t elem_bytes) {
  return hbm_gemv_cost(elements_on_pch, input_len, stack, elem_bytes, true).total();
}

std::int64_t link_transfer_cycles(std::int64_t bytes, std::int64_t link_bw_milli_bytes_per_cycle,
                                  std::int64_t dispatch) {
  if (bytes <= 0) return dispatch;
  return ceil_div(bytes * 1000, link_bw_milli_bytes_per_cycle) + dispatch;
}

std::int64_t transfer_unit_cycles(std::int64_t bytes, const CostModelParams& p,
                                  std::int64_t dispatch) {
  if (bytes <= 0) return dispatch;
  return ceil_div(bytes, p.pim_write_bw_bytes_per_cycle) + dispatch;
}

}  // namespace hpim
