#include "hpim/presets.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hpim/common.hpp"

namespace hpim {

namespace {

struct ModelPreset {
  const char* name;
  const char* json;
};

// OPT decoder family: d_emb = n_heads * d_k, 4x FFN, fp16 weights.
constexpr ModelPreset kModelPresets[] = {
    {"opt-350m",
     R"({"name":"opt-350m","d_emb":1024,"n_layers":24,"n_heads":16,"d_k":64,"elem_bytes":2,"ffn_mult":4})"},
    {"opt-1.3b",
     R"({"name":"opt-1.3b","d_emb":2048,"n_layers":24,"n_heads":32,"d_k":64,"elem_bytes":2,"ffn_mult":4})"},
    {"opt-6.7b",
     R"({"name":"opt-6.7b","d_emb":4096,"n_layers":32,"n_heads":32,"d_k":128,"elem_bytes":2,"ffn_mult":4})"},
    {"opt-13b",
     R"({"name":"opt-13b","d_emb":5120,"n_layers":40,"n_heads":40,"d_k":128,"elem_bytes":2,"ffn_mult":4})"},
    {"opt-30b",
     R"({"name":"opt-30b","d_emb":7168,"n_layers":48,"n_heads":56,"d_k":128,"elem_bytes":2,"ffn_mult":4})"},
};

const std::string kDefaultHw = R"({
  "name": "hpim-default",
  "n_cores": 32,
  "n_stacks": 4,
  "core": {
    "freq_hz": 1000000000,
    "tcu_rows": 64, "tcu_cols": 64,
    "vcu_lanes": 64,
    "pim_mgs": 16, "macros_per_mg": 16,
    "macro_bytes": 4096, "mults_per_macro": 8,
    "act_mem_bytes": 393216, "temp_mem_bytes": 32768
  },
  "stack": {
    "dies_per_stack": 8, "gbits_per_die": 24,
    "channels_per_die": 2, "pch_per_channel": 2,
    "bg_per_channel": 8, "banks_per_bg": 4,
    "page_bytes_per_pch": 1024, "mults_per_pu": 16,
    "global_buffer_bytes_per_pch": 1024,
    "freq_hz": 1000000000,
    "ext_bw_bytes_per_s": 819000000000,
    "t_act_cycles": 30, "t_bcast_bytes_per_cycle": 32
  },
  "noc_hop_cycles": 32,
  "noc_bytes_per_cycle": 64,
  "dispatch_overhead_cycles": 32,
  "params": {
    "pim_write_bw_bytes_per_cycle": 64,
    "transpose_width": 64,
    "softmax_passes": 5, "layernorm_passes": 5,
    "gelu_passes": 8, "resadd_passes": 1
  },
  "baselines": [
    {"name": "a100", "peak_flops": 312e12, "mem_bw_bytes_per_s": 2039e9, "efficiency": 1.0}
  ]
})";

bool looks_like_path(const std::string& s) {
  return s.find('/') != std::string::npos || s.ends_with(".json");
}

// Returns empty when the name does not resolve to a readable preset file.
std::string read_preset_dir_file(const std::string& name) {
  const char* dir = std::getenv("HPIM_PRESET_DIR");
  if (dir == nullptr || *dir == '\0') return {};
  const std::filesystem::path p = std::filesystem::path(dir) / (name + ".json");
  std::ifstream in(p);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ModelConfig resolve_model(const std::string& name_or_path) {
  if (const std::string text = read_preset_dir_file(name_or_path); !text.empty())
    return load_model_config(text);
  for (const ModelPreset& p : kModelPresets) {
    if (name_or_path == p.name) return load_model_config(p.json);
  }
  if (looks_like_path(name_or_path)) return load_model_config(read_file(name_or_path));
  std::string known;
  for (const ModelPreset& p : kModelPresets) {
    if (!known.empty()) known += ", ";
    known += p.name;
  }
  throw ConfigError("unknown model preset '" + name_or_path + "' (known: " + known + ")");
}

HardwareConfig resolve_hardware(const std::string& name_or_path) {
  if (const std::string text = read_preset_dir_file(name_or_path); !text.empty())
    return load_hardware_config(text);
  if (name_or_path == "hpim-default") return load_hardware_config(kDefaultHw);
  if (looks_like_path(name_or_path)) return load_hardware_config(read_file(name_or_path));
  throw ConfigError("unknown hardware preset '" + name_or_path + "' (known: hpim-default)");
}

BaselineDevice resolve_baseline(const std::string& name, const HardwareConfig& hw) {
  for (const BaselineSpec& b : hw.baselines) {
    if (b.name == name) {
      BaselineDevice dev;
      dev.name = b.name;
      dev.peak_flops = b.peak_flops;
      dev.mem_bw_bytes_per_s = b.mem_bw_bytes_per_s;
      dev.efficiency = b.efficiency;
      return dev;
    }
  }
  if (name == "a100") return BaselineDevice{};
  std::string known = "a100";
  for (const BaselineSpec& b : hw.baselines) {
    known += ", ";
    known += b.name;
  }
  throw ConfigError("unknown baseline '" + name + "' (known: " + known + ")");
}

std::vector<std::string> model_preset_names() {
  std::vector<std::string> names;
  for (const ModelPreset& p : kModelPresets) names.emplace_back(p.name);
  return names;
}

const std::string& hardware_default_json() { return kDefaultHw; }

}  // namespace hpim
