#include <doctest.h>

#include "hpim/baseline.hpp"
#include "hpim/presets.hpp"

using namespace hpim;

namespace {

OpNode node(OpKind kind, OpClass cls, std::int64_t m, std::int64_t k, std::int64_t n) {
  OpNode nd;
  nd.kind = kind;
  nd.op_class = cls;
  nd.m = m;
  nd.k = k;
  nd.n = n;
  return nd;
}

const ModelConfig& opt13b() {
  static const ModelConfig m = resolve_model("opt-13b");
  return m;
}

}  // namespace

TEST_SUITE("baseline") {

TEST_CASE("roofline bytes and arithmetic intensity") {
  const ModelConfig& m = opt13b();
  const BaselineDevice dev;
  CHECK(dev.ridge_flops_per_byte() == doctest::Approx(153.016).epsilon(1e-3));

  // Prefill-sized GEMM: weights 5120*5120, input and output 512*5120.
  const OpNode gemm = node(OpKind::GEMM, OpClass::Projection, 512, 5120, 5120);
  CHECK(roofline_bytes(gemm, m) == 62'914'560);
  CHECK(arithmetic_intensity(gemm, m) == doctest::Approx(426.67).epsilon(1e-3));
  CHECK(arithmetic_intensity(gemm, m) > dev.ridge_flops_per_byte());

  // Decode GEMV: one activation row; every weight byte read for two flops.
  const OpNode gemv = node(OpKind::GEMV, OpClass::Projection, 1, 5120, 5120);
  CHECK(roofline_bytes(gemv, m) == 52'449'280);
  CHECK(arithmetic_intensity(gemv, m) < 1.0);
  CHECK(arithmetic_intensity(gemv, m) < dev.ridge_flops_per_byte());

  // Element-wise: read and write each element.
  const OpNode ln = node(OpKind::LayerNorm, OpClass::NonLinear, 5120, 0, 0);
  CHECK(roofline_bytes(ln, m) == 2 * 5120 * 2);

  // Movement framed ops never pay twice.
  CHECK(roofline_bytes(node(OpKind::Transpose, OpClass::DataMove, 128, 0, 128), m) == 0);
  CHECK(roofline_bytes(node(OpKind::AllGather, OpClass::DataMove, 5120, 0, 0), m) == 0);
  CHECK(roofline_bytes(node(OpKind::Transfer, OpClass::DataMove, 5120, 0, 0), m) == 0);
  CHECK_THROWS_AS(arithmetic_intensity(node(OpKind::Transfer, OpClass::DataMove, 64, 0, 0), m),
                  ConfigError);
}

TEST_CASE("roofline latency takes the binding leg") {
  const ModelConfig& m = opt13b();
  BaselineDevice dev;

  // Memory-bound GEMV: bytes / bandwidth.
  const OpNode gemv = node(OpKind::GEMV, OpClass::Projection, 1, 5120, 5120);
  CHECK(roofline_latency_s(gemv, m, dev) ==
        doctest::Approx(52'449'280.0 / 2039e9).epsilon(1e-9));

  // Compute-bound GEMM: flops / peak.
  const OpNode gemm = node(OpKind::GEMM, OpClass::Projection, 512, 5120, 5120);
  CHECK(roofline_latency_s(gemm, m, dev) ==
        doctest::Approx(2.0 * 512 * 5120 * 5120 / 312e12).epsilon(1e-9));

  // Zero-byte nodes are free.
  CHECK(roofline_latency_s(node(OpKind::Transfer, OpClass::DataMove, 64, 0, 0), m, dev) == 0.0);

  // Efficiency scales the whole latency.
  BaselineDevice half = dev;
  half.efficiency = 0.5;
  CHECK(roofline_latency_s(gemv, m, half) ==
        doctest::Approx(2 * roofline_latency_s(gemv, m, dev)).epsilon(1e-9));
}

TEST_CASE("per-layer decode classes match hand-computed byte totals") {
  const ModelConfig& m = opt13b();
  const BaselineDevice dev;
  const InferenceRequest req{511, 1};
  const BaselineResult res = baseline_inference_latency(m, req, dev);

  // All decode FC ops are memory-bound reads of the weight matrix.
  const double qkv = 40 * 3 * (52'449'280.0 / 2039e9);
  const double proj = 40 * (52'449'280.0 / 2039e9);
  const double ffn = 40 * 2 * (209'766'400.0 / 2039e9);
  CHECK(res.decode.seconds_by_class[static_cast<std::size_t>(OpClass::QKVGen)] ==
        doctest::Approx(qkv).epsilon(1e-6));
  CHECK(res.decode.seconds_by_class[static_cast<std::size_t>(OpClass::Projection)] ==
        doctest::Approx(proj).epsilon(1e-6));
  CHECK(res.decode.seconds_by_class[static_cast<std::size_t>(OpClass::FFN)] ==
        doctest::Approx(ffn).epsilon(1e-6));

  double by_class = 0;
  for (double s : res.decode.seconds_by_class) by_class += s;
  CHECK(by_class == doctest::Approx(res.decode.seconds).epsilon(1e-9));
  CHECK(res.total_s() == doctest::Approx(res.prefill.seconds + res.decode.seconds));
}

TEST_CASE("decode accumulates one graph per generated token") {
  const ModelConfig& m = opt13b();
  const BaselineDevice dev;
  const BaselineResult one = baseline_inference_latency(m, {256, 1}, dev);
  const BaselineResult two = baseline_inference_latency(m, {256, 2}, dev);
  CHECK(one.prefill.seconds == doctest::Approx(two.prefill.seconds));
  CHECK(two.decode.seconds > one.decode.seconds);

  // The increment is exactly the roofline cost of the second token's graph.
  BaselinePhase extra;
  const OperatorGraph g = build_decode_graph(m, kv_cache_state(m, 257));
  for (const OpNode& nd : g.nodes) {
    const double s = roofline_latency_s(nd, m, dev);
    extra.seconds += s;
  }
  CHECK(two.decode.seconds - one.decode.seconds ==
        doctest::Approx(extra.seconds).epsilon(1e-9));

  const BaselineResult none = baseline_inference_latency(m, {256, 0}, dev);
  CHECK(none.decode.seconds == 0.0);
  CHECK(none.prefill.seconds > 0.0);
}

TEST_CASE("device validation") {
  BaselineDevice dev;
  dev.peak_flops = 0;
  CHECK_THROWS_AS(baseline_inference_latency(opt13b(), {8, 1}, dev), ConfigError);
  dev = BaselineDevice{};
  dev.efficiency = 0;
  CHECK_THROWS_AS(baseline_inference_latency(opt13b(), {8, 1}, dev), ConfigError);
}

}  // TEST_SUITE
