#include "hpim/workload.hpp"

#include <nlohmann/json.hpp>

namespace hpim {

using json = nlohmann::ordered_json;

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::GEMM: return "GEMM";
    case OpKind::GEMV: return "GEMV";
    case OpKind::Softmax: return "Softmax";
    case OpKind::LayerNorm: return "LayerNorm";
    case OpKind::GELU: return "GELU";
    case OpKind::ResAdd: return "ResAdd";
    case OpKind::Transpose: return "Transpose";
    case OpKind::AllGather: return "AllGather";
    case OpKind::Transfer: return "Transfer";
  }
  return "?";
}

const char* to_string(OpClass c) {
  switch (c) {
    case OpClass::QKVGen: return "QKVGen";
    case OpClass::Attention: return "Attention";
    case OpClass::Projection: return "Projection";
    case OpClass::FFN: return "FFN";
    case OpClass::NonLinear: return "NonLinear";
    case OpClass::DataMove: return "DataMove";
  }
  return "?";
}

std::int32_t OperatorGraph::add_node(OpKind kind, OpClass cls, std::int32_t layer,
                                     std::int32_t head, std::int64_t m, std::int64_t k,
                                     std::int64_t n, std::span<const std::int32_t> node_deps) {
  OpNode node;
  node.id = static_cast<std::int32_t>(nodes.size());
  node.kind = kind;
  node.op_class = cls;
  node.layer = layer;
  node.head = head;
  node.m = m;
  node.k = k;
  node.n = n;
  node.deps_begin = static_cast<std::int32_t>(dep_pool.size());
  for (std::int32_t d : node_deps) {
    if (d >= 0) dep_pool.push_back(d);
  }
  node.deps_count = static_cast<std::int32_t>(dep_pool.size()) - node.deps_begin;
  nodes.push_back(node);
  return node.id;
}

void validate_model(const ModelConfig& m) {
  auto positive = [&](std::int64_t v, const char* field) {
    if (v <= 0) throw ConfigError(std::string("model field must be positive: ") + field);
  };
  positive(m.d_emb, "d_emb");
  positive(m.n_layers, "n_layers");
  positive(m.n_heads, "n_heads");
  positive(m.d_k, "d_k");
  positive(m.elem_bytes, "elem_bytes");
  positive(m.ffn_mult, "ffn_mult");
  if (m.d_emb != m.n_heads * m.d_k) {
    throw ConfigError("inconsistent model: d_emb (" + std::to_string(m.d_emb) +
                      ") != n_heads * d_k (" + std::to_string(m.n_heads * m.d_k) + ")");
  }
}

ModelConfig load_model_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model config parse error: ") + e.what());
  }
  ModelConfig m;
  auto req_int = [&](const char* field) -> std::int64_t {
    if (!doc.contains(field)) throw ConfigError(std::string("model config missing field: ") + field);
    if (!doc[field].is_number_integer())
      throw ConfigError(std::string("model config field not an integer: ") + field);
    return doc[field].get<std::int64_t>();
  };
  m.name = doc.value("name", std::string{});
  m.d_emb = req_int("d_emb");
  m.n_layers = req_int("n_layers");
  m.n_heads = req_int("n_heads");
  m.d_k = req_int("d_k");
  if (doc.contains("elem_bytes")) m.elem_bytes = doc["elem_bytes"].get<std::int64_t>();
  if (doc.contains("ffn_mult")) m.ffn_mult = doc["ffn_mult"].get<std::int64_t>();
  validate_model(m);
  return m;
}

std::int64_t elementwise_passes(OpKind kind) {
  switch (kind) {
    case OpKind::Softmax: return 5;    // max, sub, exp, sum, scale+div
    case OpKind::LayerNorm: return 5;
    case OpKind::GELU: return 8;
    case OpKind::ResAdd: return 1;
    default: return 0;
  }
}

OperatorGraph build_prefill_graph(const ModelConfig& m, const InferenceRequest& req) {
  validate_model(m);
  if (req.len_in < 1) throw ConfigError("prefill requires len_in >= 1");
  OperatorGraph g;
  g.len_in = req.len_in;
  g.seq_len = req.len_in;
  const std::int64_t L = req.len_in, d = m.d_emb, dk = m.d_k, df = m.d_ffn();
  g.nodes.reserve(static_cast<std::size_t>(m.n_layers * (17 + 4 * m.n_heads)));

  std::int32_t boundary = -1;
  for (std::int32_t layer = 0; layer < m.n_layers; ++layer) {
    // Weight streams first: prefetch runs ahead of compute on the links.
    auto tw_k = g.add_node(OpKind::Transfer, OpClass::DataMove, layer, -1, d * d, 0, 0, {});
    auto tw_q = g.add_node(OpKind::Transfer, OpClass::DataMove, layer, -1, d * d, 0, 0, {});
    auto tw_v = g.add_node(OpKind::Transfer, OpClass::DataMove, layer, -1, d * d, 0, 0, {});
    auto tw_p = g.add_node(OpKind::Transfer, OpClass::DataMove, layer, -1, d * d, 0, 0, {});
    auto tw_f1 = g.add_node(OpKind::Transfer, OpClass::DataMove, layer, -1, d * df, 0, 0, {});
    auto tw_f2 = g.add_node(OpKind::Transfer, OpClass::DataMove, layer, -1, df * d, 0, 0, {});

    auto ln1 = g.add_node(OpKind::LayerNorm, OpClass::NonLinear, layer, -1, L * d, 0, 0, {boundary});
    auto kg = g.add_node(OpKind::GEMM, OpClass::QKVGen, layer, -1, L, d, d, {ln1, tw_k});
    auto qg = g.add_node(OpKind::GEMM, OpClass::QKVGen, layer, -1, L, d, d, {ln1, tw_q, kg});
    auto vg = g.add_node(OpKind::GEMM, OpClass::QKVGen, layer, -1, L, d, d, {ln1, tw_v, qg});

    std::vector<std::int32_t> head_outs;
    head_outs.reserve(static_cast<std::size_t>(m.n_heads));
    for (std::int32_t h = 0; h < m.n_heads; ++h) {
      auto tr = g.add_node(OpKind::Transpose, OpClass::DataMove, layer, h, L, 0, dk, {kg});
      auto qk = g.add_node(OpKind::GEMM, OpClass::Attention, layer, h, L, dk, L, {qg, tr});
      auto sm = g.add_node(OpKind::Softmax, OpClass::NonLinear, layer, h, L * L, 0, 0, {qk});
      auto sv = g.add_node(OpKind::GEMM, OpClass::Attention, layer, h, L, L, dk, {sm, vg});
      head_outs.push_back(sv);
    }
    std::vector<std::int32_t> proj_deps = head_outs;
    proj_deps.push_back(tw_p);
    auto proj = g.add_node(OpKind::GEMM, OpClass::Projection, layer, -1, L, d, d, proj_deps);
    auto ra1 = g.add_node(OpKind::ResAdd, OpClass::NonLinear, layer, -1, L * d, 0, 0, {proj, boundary});
    auto ln2 = g.add_node(OpKind::LayerNorm, OpClass::NonLinear, layer, -1, L * d, 0, 0, {ra1});
    auto f1 = g.add_node(OpKind::GEMM, OpClass::FFN, layer, -1, L, d, df, {ln2, tw_f1});
    auto ge = g.add_node(OpKind::GELU, OpClass::NonLinear, layer, -1, L * df, 0, 0, {f1});
    auto f2 = g.add_node(OpKind::GEMM, OpClass::FFN, layer, -1, L, df, d, {ge, tw_f2});
    boundary = g.add_node(OpKind::ResAdd, OpClass::NonLinear, layer, -1, L * d, 0, 0, {f2, ra1});
  }
  return g;
}

OperatorGraph build_decode_graph(const ModelConfig& m, const KVCacheState& kv) {
  validate_model(m);
  if (kv.seq_len < 1) throw ConfigError("decode requires cached seq_len >= 1");
  OperatorGraph g;
  g.seq_len = kv.seq_len;
  const std::int64_t d = m.d_emb, dk = m.d_k, df = m.d_ffn(), seq = kv.seq_len;
  g.nodes.reserve(static_cast<std::size_t>(m.n_layers * (11 + 9 * m.n_heads)));

  std::int32_t boundary = -1;
  for (std::int32_t layer = 0; layer < m.n_layers; ++layer) {
    auto ln1 = g.add_node(OpKind::LayerNorm, OpClass::NonLinear, layer, -1, d, 0, 0, {boundary});
    auto kg = g.add_node(OpKind::GEMV, OpClass::QKVGen, layer, -1, 1, d, d, {ln1});
    auto qg = g.add_node(OpKind::GEMV, OpClass::QKVGen, layer, -1, 1, d, d, {ln1});
    auto vg = g.add_node(OpKind::GEMV, OpClass::QKVGen, layer, -1, 1, d, d, {ln1});

    std::vector<std::int32_t> head_outs;
    head_outs.reserve(static_cast<std::size_t>(m.n_heads));
    for (std::int32_t h = 0; h < m.n_heads; ++h) {
      auto tk = g.add_node(OpKind::Transfer, OpClass::DataMove, layer, h, dk, 0, 0, {kg});
      auto tq = g.add_node(OpKind::Transfer, OpClass::DataMove, layer, h, dk, 0, 0, {qg});
      auto tv = g.add_node(OpKind::Transfer, OpClass::DataMove, layer, h, dk, 0, 0, {vg});
      auto sk = g.add_node(OpKind::Transfer, OpClass::DataMove, layer, h, seq * dk, 0, 0, {});
      auto sv_st = g.add_node(OpKind::Transfer, OpClass::DataMove, layer, h, seq * dk, 0, 0, {});
      auto tr = g.add_node(OpKind::Transpose, OpClass::DataMove, layer, h, dk, 0, 1, {tk});
      auto qk = g.add_node(OpKind::GEMV, OpClass::Attention, layer, h, 1, dk, seq, {tq, tr, sk});
      auto sm = g.add_node(OpKind::Softmax, OpClass::NonLinear, layer, h, seq, 0, 0, {qk});
      auto sv = g.add_node(OpKind::GEMV, OpClass::Attention, layer, h, 1, seq, dk, {sm, tv, sv_st});
      head_outs.push_back(sv);
    }
    auto proj = g.add_node(OpKind::GEMV, OpClass::Projection, layer, -1, 1, d, d, head_outs);
    auto ra1 = g.add_node(OpKind::ResAdd, OpClass::NonLinear, layer, -1, d, 0, 0, {proj, boundary});
    auto ln2 = g.add_node(OpKind::LayerNorm, OpClass::NonLinear, layer, -1, d, 0, 0, {ra1});
    auto f1 = g.add_node(OpKind::GEMV, OpClass::FFN, layer, -1, 1, d, df, {ln2});
    auto ge = g.add_node(OpKind::GELU, OpClass::NonLinear, layer, -1, df, 0, 0, {f1});
    auto f2 = g.add_node(OpKind::GEMV, OpClass::FFN, layer, -1, 1, df, d, {ge});
    boundary = g.add_node(OpKind::ResAdd, OpClass::NonLinear, layer, -1, d, 0, 0, {f2, ra1});
  }
  return g;
}

std::int64_t op_flops(const OpNode& node) {
  switch (node.kind) {
    case OpKind::GEMM:
    case OpKind::GEMV:
      return 2 * node.m * node.k * node.n;
    case OpKind::Softmax:
    case OpKind::LayerNorm:
    case OpKind::GELU:
    case OpKind::ResAdd:
      return elementwise_passes(node.kind) * node.elements();
    case OpKind::Transpose:
    case OpKind::AllGather:
    case OpKind::Transfer:
      return 0;
  }
  return 0;
}

std::int64_t op_weight_bytes(const OpNode& node, const ModelConfig& m, bool* weight_free) {
  const bool is_matrix = node.kind == OpKind::GEMM || node.kind == OpKind::GEMV;
  const bool has_weights = is_matrix && (node.op_class == OpClass::QKVGen ||
                                         node.op_class == OpClass::Projection ||
                                         node.op_class == OpClass::FFN);
  if (weight_free) *weight_free = !has_weights;
  if (!has_weights) return 0;
  return node.k * node.n * m.elem_bytes;
}

std::int64_t model_weight_bytes(const ModelConfig& m) {
  // Decoder body only (embedding and LM head excluded): sum one layer's
  // static weights, times layer count.
  OperatorGraph g = build_decode_graph(m, kv_cache_state(m, 1));
  std::int64_t per_layer = 0;
  for (const OpNode& n : g.nodes) {
    if (n.layer != 0) break;
    per_layer += op_weight_bytes(n, m);
  }
  return per_layer * m.n_layers;
}

std::int64_t kv_cache_bytes(const ModelConfig& m, std::int64_t seq) {
  return 2 * m.n_layers * seq * m.d_emb * m.elem_bytes;
}

KVCacheState kv_cache_state(const ModelConfig& m, std::int64_t seq) {
  KVCacheState kv;
  kv.seq_len = seq;
  kv.bytes_per_layer = 2 * seq * m.d_emb * m.elem_bytes;
  kv.total_bytes = kv.bytes_per_layer * m.n_layers;
  return kv;
}

}  // namespace hpim
