#include "hpim/arch.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

namespace hpim {

using json = nlohmann::ordered_json;

namespace {

void check_known_fields(const json& obj, std::initializer_list<const char*> known,
                        const char* scope) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(known.begin(), known.end(),
                     [&](const char* k) { return it.key() == k; }) == known.end()) {
      throw ConfigError(std::string("unknown hardware config field ") + scope + "." + it.key());
    }
  }
}

std::int64_t get_i(const json& obj, const char* field, std::int64_t dflt) {
  if (!obj.contains(field)) return dflt;
  if (!obj[field].is_number_integer())
    throw ConfigError(std::string("hardware config field not an integer: ") + field);
  return obj[field].get<std::int64_t>();
}

}  // namespace

HardwareConfig load_hardware_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("hardware config parse error: ") + e.what());
  }
  HardwareConfig hw;
  check_known_fields(doc,
                     {"name", "n_cores", "n_stacks", "core", "stack", "noc_hop_cycles",
                      "noc_bytes_per_cycle", "dispatch_overhead_cycles", "link_map", "params",
                      "baselines"},
                     "hw");
  hw.name = doc.value("name", std::string{});
  hw.n_cores = get_i(doc, "n_cores", hw.n_cores);
  hw.n_stacks = get_i(doc, "n_stacks", hw.n_stacks);
  hw.noc_hop_cycles = get_i(doc, "noc_hop_cycles", hw.noc_hop_cycles);
  hw.noc_bytes_per_cycle = get_i(doc, "noc_bytes_per_cycle", hw.noc_bytes_per_cycle);
  hw.dispatch_overhead_cycles = get_i(doc, "dispatch_overhead_cycles", hw.dispatch_overhead_cycles);

  if (doc.contains("core")) {
    const json& c = doc["core"];
    check_known_fields(c,
                       {"tcu_rows", "tcu_cols", "vcu_lanes", "pim_mgs", "macros_per_mg",
                        "macro_bytes", "mults_per_macro", "act_mem_bytes", "temp_mem_bytes",
                        "freq_hz"},
                       "hw.core");
    SramCoreConfig& s = hw.core;
    s.tcu_rows = get_i(c, "tcu_rows", s.tcu_rows);
    s.tcu_cols = get_i(c, "tcu_cols", s.tcu_cols);
    s.vcu_lanes = get_i(c, "vcu_lanes", s.vcu_lanes);
    s.pim_mgs = get_i(c, "pim_mgs", s.pim_mgs);
    s.macros_per_mg = get_i(c, "macros_per_mg", s.macros_per_mg);
    s.macro_bytes = get_i(c, "macro_bytes", s.macro_bytes);
    s.mults_per_macro = get_i(c, "mults_per_macro", s.mults_per_macro);
    s.act_mem_bytes = get_i(c, "act_mem_bytes", s.act_mem_bytes);
    s.temp_mem_bytes = get_i(c, "temp_mem_bytes", s.temp_mem_bytes);
    s.freq_hz = get_i(c, "freq_hz", s.freq_hz);
  }
  if (doc.contains("stack")) {
    const json& c = doc["stack"];
    check_known_fields(c,
                       {"dies_per_stack", "gbits_per_die", "channels_per_die", "pch_per_channel",
                        "bg_per_channel", "banks_per_bg", "page_bytes_per_pch", "mults_per_pu",
                        "global_buffer_bytes_per_pch", "freq_hz", "ext_bw_bytes_per_s",
                        "t_act_cycles", "t_bcast_bytes_per_cycle"},
                       "hw.stack");
    HbmStackConfig& s = hw.stack;
    s.dies_per_stack = get_i(c, "dies_per_stack", s.dies_per_stack);
    s.gbits_per_die = get_i(c, "gbits_per_die", s.gbits_per_die);
    s.channels_per_die = get_i(c, "channels_per_die", s.channels_per_die);
    s.pch_per_channel = get_i(c, "pch_per_channel", s.pch_per_channel);
    s.bg_per_channel = get_i(c, "bg_per_channel", s.bg_per_channel);
    s.banks_per_bg = get_i(c, "banks_per_bg", s.banks_per_bg);
    s.page_bytes_per_pch = get_i(c, "page_bytes_per_pch", s.page_bytes_per_pch);
    s.mults_per_pu = get_i(c, "mults_per_pu", s.mults_per_pu);
    s.global_buffer_bytes_per_pch = get_i(c, "global_buffer_bytes_per_pch", s.global_buffer_bytes_per_pch);
    s.freq_hz = get_i(c, "freq_hz", s.freq_hz);
    s.ext_bw_bytes_per_s = get_i(c, "ext_bw_bytes_per_s", s.ext_bw_bytes_per_s);
    s.t_act_cycles = get_i(c, "t_act_cycles", s.t_act_cycles);
    s.t_bcast_bytes_per_cycle = get_i(c, "t_bcast_bytes_per_cycle", s.t_bcast_bytes_per_cycle);
  }
  if (doc.contains("params")) {
    const json& c = doc["params"];
    check_known_fields(c,
                       {"pim_write_bw_bytes_per_cycle", "transpose_width", "softmax_passes",
                        "layernorm_passes", "gelu_passes", "resadd_passes"},
                       "hw.params");
    CostModelParams& p = hw.params;
    p.pim_write_bw_bytes_per_cycle = get_i(c, "pim_write_bw_bytes_per_cycle", p.pim_write_bw_bytes_per_cycle);
    p.transpose_width = get_i(c, "transpose_width", p.transpose_width);
    p.softmax_passes = get_i(c, "softmax_passes", p.softmax_passes);
    p.layernorm_passes = get_i(c, "layernorm_passes", p.layernorm_passes);
    p.gelu_passes = get_i(c, "gelu_passes", p.gelu_passes);
    p.resadd_passes = get_i(c, "resadd_passes", p.resadd_passes);
  }
  if (doc.contains("link_map")) {
    for (const json& row : doc["link_map"]) {
      std::vector<std::int32_t> chans;
      for (const json& ch : row) chans.push_back(ch.get<std::int32_t>());
      hw.link_map.push_back(std::move(chans));
    }
  }
  if (doc.contains("baselines")) {
    if (!doc["baselines"].is_array())
      throw ConfigError("hw.baselines must be an array of device objects");
    for (const json& row : doc["baselines"]) {
      check_known_fields(row, {"name", "peak_flops", "mem_bw_bytes_per_s", "efficiency"},
                         "hw.baselines[]");
      BaselineSpec b;
      b.name = row.value("name", std::string{});
      if (b.name.empty()) throw ConfigError("hw.baselines entry missing name");
      b.peak_flops = row.value("peak_flops", 0.0);
      b.mem_bw_bytes_per_s = row.value("mem_bw_bytes_per_s", 0.0);
      b.efficiency = row.value("efficiency", 1.0);
      hw.baselines.push_back(std::move(b));
    }
  }
  validate_config(hw);
  return hw;
}

void validate_config(HardwareConfig& hw) {
  auto positive = [](std::int64_t v, const char* field) {
    if (v <= 0) throw ConfigError(std::string("hardware field must be positive: ") + field);
  };
  positive(hw.n_cores, "n_cores");
  positive(hw.n_stacks, "n_stacks");
  positive(hw.core.tcu_rows, "core.tcu_rows");
  positive(hw.core.tcu_cols, "core.tcu_cols");
  positive(hw.core.vcu_lanes, "core.vcu_lanes");
  positive(hw.core.pim_mgs, "core.pim_mgs");
  positive(hw.core.macros_per_mg, "core.macros_per_mg");
  positive(hw.core.macro_bytes, "core.macro_bytes");
  positive(hw.core.mults_per_macro, "core.mults_per_macro");
  positive(hw.core.act_mem_bytes, "core.act_mem_bytes");
  positive(hw.core.freq_hz, "core.freq_hz");
  positive(hw.stack.dies_per_stack, "stack.dies_per_stack");
  positive(hw.stack.gbits_per_die, "stack.gbits_per_die");
  positive(hw.stack.channels_per_die, "stack.channels_per_die");
  positive(hw.stack.pch_per_channel, "stack.pch_per_channel");
  positive(hw.stack.bg_per_channel, "stack.bg_per_channel");
  positive(hw.stack.banks_per_bg, "stack.banks_per_bg");
  positive(hw.stack.page_bytes_per_pch, "stack.page_bytes_per_pch");
  positive(hw.stack.mults_per_pu, "stack.mults_per_pu");
  positive(hw.stack.freq_hz, "stack.freq_hz");
  positive(hw.stack.ext_bw_bytes_per_s, "stack.ext_bw_bytes_per_s");
  positive(hw.noc_bytes_per_cycle, "noc_bytes_per_cycle");
  if (hw.noc_hop_cycles < 0 || hw.dispatch_overhead_cycles < 0 || hw.stack.t_act_cycles < 0)
    throw ConfigError("cycle overheads must be non-negative");
  positive(hw.stack.t_bcast_bytes_per_cycle, "stack.t_bcast_bytes_per_cycle");
  positive(hw.params.pim_write_bw_bytes_per_cycle, "params.pim_write_bw_bytes_per_cycle");
  positive(hw.params.transpose_width, "params.transpose_width");

  const std::int64_t n_ch = hw.n_channels();
  if ((n_ch & (n_ch - 1)) != 0)
    throw ConfigError("channel count " + std::to_string(n_ch) +
                      " is not a power of two; the head-interleave allocation requires exact "
                      "channels-per-head division");
  if (hw.stack.bg_per_channel * hw.stack.banks_per_bg % hw.stack.pch_per_channel != 0)
    throw ConfigError("banks per channel must divide evenly across pseudo-channels");

  if (hw.link_map.empty()) {
    // Contiguous split: channel 2c and 2c+1 belong to core c with defaults.
    hw.link_map.resize(static_cast<std::size_t>(hw.n_cores));
    const std::int64_t base = n_ch / hw.n_cores, rem = n_ch % hw.n_cores;
    std::int32_t next = 0;
    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      const std::int64_t take = base + (c < rem ? 1 : 0);
      for (std::int64_t i = 0; i < take; ++i) hw.link_map[c].push_back(next++);
    }
  }
  if (static_cast<std::int64_t>(hw.link_map.size()) != hw.n_cores)
    throw ConfigError("link_map must have one channel set per core");
  std::set<std::int32_t> seen;
  for (const auto& row : hw.link_map) {
    for (std::int32_t ch : row) {
      if (ch < 0 || ch >= n_ch)
        throw ConfigError("link_map channel out of range: " + std::to_string(ch));
      if (!seen.insert(ch).second)
        throw ConfigError("link_map assigns channel " + std::to_string(ch) + " to two cores");
    }
  }
  if (static_cast<std::int64_t>(seen.size()) != n_ch)
    throw ConfigError("link_map leaves channels unassigned: covered " +
                      std::to_string(seen.size()) + " of " + std::to_string(n_ch));
}

DerivedMetrics derive_metrics(const HardwareConfig& hw) {
  DerivedMetrics d;
  const auto& c = hw.core;
  const auto& s = hw.stack;
  d.tcu_peak_flops = static_cast<double>(hw.n_cores) * c.tcu_rows * c.tcu_cols * 2.0 *
                     static_cast<double>(c.freq_hz);
  d.pimunit_peak_flops_per_core =
      static_cast<double>(c.pim_macs_per_cycle()) * 2.0 * static_cast<double>(c.freq_hz);
  d.pimunit_peak_flops_total = d.pimunit_peak_flops_per_core * static_cast<double>(hw.n_cores);
  d.n_channels = hw.n_channels();
  d.n_pch = hw.n_pch();
  d.n_banks = hw.n_banks();
  d.hbm_pim_peak_flops = static_cast<double>(d.n_banks) * static_cast<double>(s.mults_per_pu) *
                         2.0 * static_cast<double>(s.freq_hz);
  d.sram_capacity_bytes = hw.n_cores * (c.pim_bytes() + c.act_mem_bytes + c.temp_mem_bytes);
  d.dram_capacity_bytes =
      hw.n_stacks * s.dies_per_stack * s.gbits_per_die * (std::int64_t{1} << 30) / 8;
  d.dram_ext_bw = static_cast<double>(hw.n_stacks) * static_cast<double>(s.ext_bw_bytes_per_s);
  d.dram_internal_bw = static_cast<double>(d.n_banks) * static_cast<double>(s.mults_per_pu) *
                       2.0 * static_cast<double>(s.freq_hz);
  return d;
}

std::vector<ResourceInfo> enumerate_resources(const HardwareConfig& hw) {
  std::vector<ResourceInfo> out;
  out.reserve(static_cast<std::size_t>(total_resources(hw)));
  static constexpr const char* unit_names[kUnitsPerCore] = {"tcu", "vcu", "pim", "tpu", "dma"};
  static constexpr ResourceKind unit_kinds[kUnitsPerCore] = {
      ResourceKind::TCU, ResourceKind::VCU, ResourceKind::PIMUnit, ResourceKind::TransposeUnit,
      ResourceKind::TransferUnit};
  for (std::int32_t c = 0; c < hw.n_cores; ++c) {
    for (int u = 0; u < kUnitsPerCore; ++u) {
      ResourceInfo r;
      r.id = c * kUnitsPerCore + u;
      r.kind = unit_kinds[u];
      r.index = c;
      r.name = "core" + std::to_string(c) + "." + unit_names[u];
      out.push_back(std::move(r));
    }
  }
  for (std::int32_t p = 0; p < hw.n_pch(); ++p) {
    ResourceInfo r;
    r.id = res_pch(hw, p);
    r.kind = ResourceKind::PCH;
    r.index = p;
    r.name = "pch" + std::to_string(p);
    out.push_back(std::move(r));
  }
  for (std::int32_t c = 0; c < hw.n_cores; ++c) {
    ResourceInfo r;
    r.id = res_link(hw, c);
    r.kind = ResourceKind::Link;
    r.index = c;
    r.name = "link" + std::to_string(c);
    out.push_back(std::move(r));
  }
  ResourceInfo noc;
  noc.id = res_noc(hw);
  noc.kind = ResourceKind::NoC;
  noc.index = 0;
  noc.name = "noc";
  out.push_back(std::move(noc));
  return out;
}

}  // namespace hpim
