#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "hpim/workload.hpp"

namespace hpim {

struct BaselineDevice {
  std::string name = "a100";
  double peak_flops = 312e12;
  double mem_bw_bytes_per_s = 2039e9;
  double efficiency = 1.0;  // achievable fraction of the roofline

  double ridge_flops_per_byte() const { return peak_flops / mem_bw_bytes_per_s; }
};

// Bytes moved by a node under the roofline convention: weights + inputs +
// outputs, each once. DataMove nodes return 0 (their traffic is already
// inside the matrix ops' byte terms).
std::int64_t roofline_bytes(const OpNode& node, const ModelConfig& m);
double arithmetic_intensity(const OpNode& node, const ModelConfig& m);
double roofline_latency_s(const OpNode& node, const ModelConfig& m, const BaselineDevice& dev);

struct BaselinePhase {
  double seconds = 0;
  std::array<double, kNumOpClasses> seconds_by_class{};
};

struct BaselineResult {
  BaselineDevice device;
  BaselinePhase prefill;
  BaselinePhase decode;
  double total_s() const { return prefill.seconds + decode.seconds; }
};

BaselineResult baseline_inference_latency(const ModelConfig& m, const InferenceRequest& req,
                                          const BaselineDevice& dev);

}  // namespace hpim
