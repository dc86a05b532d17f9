#include "hpim/baseline.hpp"

#include <algorithm>

#include "hpim/common.hpp"

namespace hpim {

std::int64_t roofline_bytes(const OpNode& node, const ModelConfig& m) {
  switch (node.kind) {
    case OpKind::GEMM:
    case OpKind::GEMV:
      // weights/operand K*N + input M*K + output M*N, each touched once.
      return (node.k * node.n + node.m * node.k + node.m * node.n) *
             static_cast<std::int64_t>(m.elem_bytes);
    case OpKind::Softmax:
    case OpKind::LayerNorm:
    case OpKind::GELU:
    case OpKind::ResAdd:
      // read + write of the activation vector.
      return 2 * node.elements() * static_cast<std::int64_t>(m.elem_bytes);
    case OpKind::Transpose:
    case OpKind::AllGather:
    case OpKind::Transfer:
      return 0;
  }
  return 0;
}

double arithmetic_intensity(const OpNode& node, const ModelConfig& m) {
  const std::int64_t bytes = roofline_bytes(node, m);
  if (bytes == 0) throw ConfigError("arithmetic intensity undefined for zero-byte node");
  return static_cast<double>(op_flops(node)) / static_cast<double>(bytes);
}

double roofline_latency_s(const OpNode& node, const ModelConfig& m, const BaselineDevice& dev) {
  const std::int64_t bytes = roofline_bytes(node, m);
  if (bytes == 0) return 0.0;
  const double compute_s = static_cast<double>(op_flops(node)) / dev.peak_flops;
  const double memory_s = static_cast<double>(bytes) / dev.mem_bw_bytes_per_s;
  return std::max(compute_s, memory_s) / dev.efficiency;
}

namespace {

void add_graph(const OperatorGraph& g, const ModelConfig& m, const BaselineDevice& dev,
               BaselinePhase& phase) {
  for (const OpNode& node : g.nodes) {
    const double s = roofline_latency_s(node, m, dev);
    phase.seconds += s;
    phase.seconds_by_class[static_cast<std::size_t>(node.op_class)] += s;
  }
}

}  // namespace

BaselineResult baseline_inference_latency(const ModelConfig& m, const InferenceRequest& req,
                                          const BaselineDevice& dev) {
  validate_model(m);
  if (dev.peak_flops <= 0 || dev.mem_bw_bytes_per_s <= 0 || dev.efficiency <= 0)
    throw ConfigError("baseline device needs positive peak flops, bandwidth, and efficiency");
  BaselineResult res;
  res.device = dev;
  add_graph(build_prefill_graph(m, req), m, dev, res.prefill);
  for (std::int64_t t = 0; t < req.len_out; ++t) {
    add_graph(build_decode_graph(m, kv_cache_state(m, req.len_in + t)), m, dev, res.decode);
  }
  return res;
}

}  // namespace hpim
