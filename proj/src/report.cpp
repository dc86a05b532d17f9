#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>

#include "hpim/cli.hpp"
#include "hpim/presets.hpp"

namespace hpim {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

constexpr OpClass kClassOrder[] = {OpClass::QKVGen,    OpClass::Attention, OpClass::Projection,
                                   OpClass::FFN,       OpClass::NonLinear, OpClass::DataMove};

}  // namespace

std::string report_json(const ModelConfig& m, const HardwareConfig& hw,
                        const InferenceRequest& req, const LatencyReport& rep,
                        const BaselineResult& base) {
  using json = nlohmann::ordered_json;
  json out;
  out["model"] = {{"name", m.name},       {"d_emb", m.d_emb},   {"n_layers", m.n_layers},
                  {"n_heads", m.n_heads}, {"d_k", m.d_k},       {"d_ffn", m.d_ffn()},
                  {"elem_bytes", m.elem_bytes}};
  out["hw"] = {{"name", hw.name},
               {"n_cores", hw.n_cores},
               {"n_stacks", hw.n_stacks},
               {"n_channels", hw.n_channels()},
               {"n_pch", hw.n_pch()},
               {"freq_hz", hw.core.freq_hz}};
  out["request"] = {{"len_in", req.len_in}, {"len_out", req.len_out}};

  json phases;
  phases["prefill"] = rep.us(rep.prefill_cycles);
  phases["decode"] = rep.us(rep.decode_cycles);
  phases["total"] = rep.us(rep.total_cycles);
  json per_token = json::array();
  for (std::int64_t c : rep.decode_token_cycles) per_token.push_back(rep.us(c));
  phases["decode_per_token"] = std::move(per_token);
  out["phase_latencies_us"] = std::move(phases);

  json breakdown = json::array();
  for (OpClass cls : kClassOrder) {
    const auto i = static_cast<std::size_t>(cls);
    json row;
    row["op_class"] = to_string(cls);
    row["busy_cycles"] = rep.breakdown.busy_cycles[i];
    row["busy_us"] = rep.us(rep.breakdown.busy_cycles[i]);
    row["hbm_busy_cycles"] = rep.breakdown.hbm_busy_cycles[i];
    row["critical_cycles"] = rep.breakdown.critical_cycles[i];
    row["critical_us"] = rep.us(rep.breakdown.critical_cycles[i]);
    row["critical_share"] =
        rep.total_cycles > 0
            ? static_cast<double>(rep.breakdown.critical_cycles[i]) /
                  static_cast<double>(rep.total_cycles)
            : 0.0;
    breakdown.push_back(std::move(row));
  }
  out["breakdown"] = std::move(breakdown);

  json util = json::array();
  for (const ResourceUtil& u : rep.utilization) {
    util.push_back({{"resource", u.resource},
                    {"name", u.name},
                    {"busy_cycles", u.busy_cycles},
                    {"utilization", u.utilization}});
  }
  out["utilization"] = std::move(util);

  const double total_us = rep.us(rep.total_cycles);
  const double base_total_us = base.total_s() * 1e6;
  out["baseline"] = {{"name", base.device.name},
                     {"prefill_us", base.prefill.seconds * 1e6},
                     {"decode_us", base.decode.seconds * 1e6},
                     {"total_us", base_total_us},
                     {"speedup", total_us > 0 ? base_total_us / total_us : 0.0}};
  return out.dump(1) + "\n";
}

std::string breakdown_csv(const LatencyReport& rep) {
  std::string out =
      "op_class,busy_cycles,busy_us,hbm_busy_cycles,critical_cycles,critical_us,"
      "critical_share\n";
  for (OpClass cls : kClassOrder) {
    const auto i = static_cast<std::size_t>(cls);
    out += to_string(cls);
    out += ',' + std::to_string(rep.breakdown.busy_cycles[i]);
    out += ',' + fmt("%.3f", rep.us(rep.breakdown.busy_cycles[i]));
    out += ',' + std::to_string(rep.breakdown.hbm_busy_cycles[i]);
    out += ',' + std::to_string(rep.breakdown.critical_cycles[i]);
    out += ',' + fmt("%.3f", rep.us(rep.breakdown.critical_cycles[i]));
    const double share = rep.total_cycles > 0
                             ? static_cast<double>(rep.breakdown.critical_cycles[i]) /
                                   static_cast<double>(rep.total_cycles)
                             : 0.0;
    out += ',' + fmt("%.4f", share) + '\n';
  }
  return out;
}

std::string validate_text(const std::string& hw_name_or_path) {
  const HardwareConfig hw = resolve_hardware(hw_name_or_path);
  const DerivedMetrics dm = derive_metrics(hw);
  const bool assert_expected = hw.name == "hpim-default";

  std::string out;
  auto line = [&](const char* metric, const std::string& value, const char* expected,
                  bool ok) {
    if (assert_expected && expected != nullptr) {
      out += ok ? "PASS " : "FAIL ";
      out += metric;
      out += ' ' + value + " (expected ";
      out += expected;
      out += ")\n";
    } else {
      out += "INFO ";
      out += metric;
      out += ' ' + value + '\n';
    }
  };
  auto within = [](double v, double expect, double rel) {
    return std::fabs(v - expect) <= rel * expect;
  };

  const double tcu_tf = dm.tcu_peak_flops / 1e12;
  const double pim_core_tf = dm.pimunit_peak_flops_per_core / 1e12;
  const double pim_total_tf = dm.pimunit_peak_flops_total / 1e12;
  const double hbm_tf = dm.hbm_pim_peak_flops / 1e12;
  line("tcu_peak", fmt("%.3f", tcu_tf) + " TFLOPS", "262 +-0.5%", within(tcu_tf, 262.0, 0.005));
  line("pim_unit_per_core", fmt("%.3f", pim_core_tf) + " TFLOPS", "4.09 +-0.5%",
       within(pim_core_tf, 4.09, 0.005));
  line("pim_unit_total", fmt("%.3f", pim_total_tf) + " TFLOPS", "131 +-0.5%",
       within(pim_total_tf, 131.0, 0.005));
  line("hbm_pim_peak", fmt("%.3f", hbm_tf) + " TFLOPS", "65.5 +-1%", within(hbm_tf, 65.5, 0.01));
  line("sram_capacity", std::to_string(dm.sram_capacity_bytes) + " B", "45 MiB",
       dm.sram_capacity_bytes == 45ll * 1024 * 1024);
  line("dram_capacity", std::to_string(dm.dram_capacity_bytes) + " B", "96 GiB",
       dm.dram_capacity_bytes == 96ll * 1024 * 1024 * 1024);
  line("dram_ext_bw", fmt("%.3f", dm.dram_ext_bw / 1e9) + " GB/s", "3276 GB/s",
       dm.dram_ext_bw == 3276e9);
  out += "INFO dram_internal_bw " + fmt("%.3f", dm.dram_internal_bw / 1e12) +
         " TB/s derived as banks x elem width x frequency (datasheet lists 102.4 TB/s; the "
         "derived figure is reported, not asserted)\n";
  out += "INFO resources " + std::to_string(total_resources(hw)) + "\n";
  return out;
}

}  // namespace hpim
