#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hpim/common.hpp"

namespace hpim {

enum class OpKind : std::uint8_t {
  GEMM,
  GEMV,
  Softmax,
  LayerNorm,
  GELU,
  ResAdd,
  Transpose,
  AllGather,
  Transfer,
};

enum class OpClass : std::uint8_t {
  QKVGen,
  Attention,
  Projection,
  FFN,
  NonLinear,
  DataMove,
};
inline constexpr int kNumOpClasses = 6;

const char* to_string(OpKind k);
const char* to_string(OpClass c);

struct ModelConfig {
  std::string name;
  std::int64_t d_emb = 0;
  std::int64_t n_layers = 0;
  std::int64_t n_heads = 0;
  std::int64_t d_k = 0;
  std::int64_t elem_bytes = 2;  // FP16
  std::int64_t ffn_mult = 4;

  std::int64_t d_ffn() const { return ffn_mult * d_emb; }
};

struct InferenceRequest {
  std::int64_t len_in = 1;
  std::int64_t len_out = 0;
};

struct KVCacheState {
  std::int64_t seq_len = 0;
  std::int64_t bytes_per_layer = 0;
  std::int64_t total_bytes = 0;
};

// Matrix ops carry (m, k, n); element-wise ops carry the element count in m
// with k = n = 0; Transpose carries (m=rows, n=cols); Transfer carries the
// element count in m.
struct OpNode {
  std::int32_t id = 0;
  OpKind kind = OpKind::GEMM;
  OpClass op_class = OpClass::NonLinear;
  std::int32_t layer = 0;
  std::int32_t head = -1;  // -1 when not head-scoped
  std::int64_t m = 0, k = 0, n = 0;
  std::int32_t deps_begin = 0;
  std::int32_t deps_count = 0;

  std::int64_t elements() const { return m; }
};

struct OperatorGraph {
  std::vector<OpNode> nodes;
  std::vector<std::int32_t> dep_pool;  // CSR storage for OpNode deps
  std::int64_t len_in = 0;
  std::int64_t seq_len = 0;  // KV length visible to attention (decode)

  std::span<const std::int32_t> deps(const OpNode& n) const {
    return {dep_pool.data() + n.deps_begin, static_cast<std::size_t>(n.deps_count)};
  }

  std::int32_t add_node(OpKind kind, OpClass cls, std::int32_t layer, std::int32_t head,
                        std::int64_t m, std::int64_t k, std::int64_t n,
                        std::span<const std::int32_t> deps);
  std::int32_t add_node(OpKind kind, OpClass cls, std::int32_t layer, std::int32_t head,
                        std::int64_t m, std::int64_t k, std::int64_t n,
                        std::initializer_list<std::int32_t> deps) {
    return add_node(kind, cls, layer, head, m, k, n,
                    std::span<const std::int32_t>(deps.begin(), deps.size()));
  }
};

ModelConfig load_model_config(const std::string& json_text);
void validate_model(const ModelConfig& m);

OperatorGraph build_prefill_graph(const ModelConfig& m, const InferenceRequest& req);
// seq_len = len_in + token_index (tokens cached when generating token_index,
// counting the prompt; the new token's K/V join the cache inside the step).
OperatorGraph build_decode_graph(const ModelConfig& m, const KVCacheState& kv);

std::int64_t op_flops(const OpNode& node);
// Static weight bytes (QKVGen/Projection/FFN matrix ops). Weight-free kinds
// return 0 and set *weight_free when provided.
std::int64_t op_weight_bytes(const OpNode& node, const ModelConfig& m,
                             bool* weight_free = nullptr);
std::int64_t model_weight_bytes(const ModelConfig& m);
std::int64_t kv_cache_bytes(const ModelConfig& m, std::int64_t seq);
KVCacheState kv_cache_state(const ModelConfig& m, std::int64_t seq);

// Element-wise FLOP pass constants (also the VCU pass counts).
std::int64_t elementwise_passes(OpKind kind);

}  // namespace hpim
