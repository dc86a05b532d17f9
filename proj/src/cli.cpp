#include "hpim/cli.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "hpim/presets.hpp"

namespace hpim {

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

// --params accepts an inline JSON object or a path to one; keys override the
// cost-model knobs of the loaded hardware config.
void apply_params(HardwareConfig& hw, const std::string& params) {
  if (params.empty()) return;
  std::string text = params;
  if (params.find('{') == std::string::npos) {
    std::ifstream in(params);
    if (!in) throw IoError("cannot read params file: " + params);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("params parse error: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("params must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!it.value().is_number_integer())
      throw ConfigError("params field not an integer: " + it.key());
    const std::int64_t v = it.value().get<std::int64_t>();
    if (it.key() == "pim_write_bw_bytes_per_cycle") hw.params.pim_write_bw_bytes_per_cycle = v;
    else if (it.key() == "transpose_width") hw.params.transpose_width = v;
    else if (it.key() == "softmax_passes") hw.params.softmax_passes = v;
    else if (it.key() == "layernorm_passes") hw.params.layernorm_passes = v;
    else if (it.key() == "gelu_passes") hw.params.gelu_passes = v;
    else if (it.key() == "resadd_passes") hw.params.resadd_passes = v;
    else if (it.key() == "dispatch_overhead_cycles") hw.dispatch_overhead_cycles = v;
    else if (it.key() == "noc_hop_cycles") hw.noc_hop_cycles = v;
    else if (it.key() == "noc_bytes_per_cycle") hw.noc_bytes_per_cycle = v;
    else throw ConfigError("unknown params field: " + it.key());
  }
  validate_config(hw);
}

std::string fmt_us(double us) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", us);
  return buf;
}

std::string fmt_speedup(double s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", s);
  return buf;
}

}  // namespace

int cli_run(const RunSpec& spec) {
  const ModelConfig m = resolve_model(spec.model);
  HardwareConfig hw = resolve_hardware(spec.hw);
  apply_params(hw, spec.params);
  const InferenceRequest req{spec.len_in, spec.len_out};

  SimOptions opts;
  opts.collect_trace = !spec.trace_path.empty();
  const SimResult sim = simulate_inference(m, hw, req, opts);
  const BaselineDevice dev = resolve_baseline(spec.baseline, hw);
  const BaselineResult base = baseline_inference_latency(m, req, dev);

  const std::string report = report_json(m, hw, req, sim.report, base);
  if (spec.report_path.empty()) {
    std::cout << report;
  } else {
    write_text(spec.report_path, report);
  }
  if (!spec.trace_path.empty()) write_text(spec.trace_path, emit_trace(sim.trace, hw));
  if (!spec.csv_path.empty()) write_text(spec.csv_path, breakdown_csv(sim.report));
  return 0;
}

std::string sweep_csv(const SweepSpec& spec) {
  if (spec.models.empty() || spec.lengths.empty())
    throw ConfigError("sweep needs at least one model and one length pair");
  HardwareConfig hw = resolve_hardware(spec.hw);
  apply_params(hw, spec.params);
  const BaselineDevice dev = resolve_baseline(spec.baseline, hw);

  struct Cell {
    std::string model;
    std::int64_t len_in = 0, len_out = 0;
  };
  std::vector<Cell> grid;
  for (const std::string& model : spec.models) {
    for (const auto& [len_in, len_out] : spec.lengths) grid.push_back({model, len_in, len_out});
  }

  std::vector<std::string> rows(grid.size());
  auto run_cell = [&](std::size_t i) {
    const Cell& cell = grid[i];
    const ModelConfig m = resolve_model(cell.model);
    std::string row = m.name + ',' + std::to_string(m.d_emb) + ',' + std::to_string(m.n_layers) +
                      ',' + std::to_string(m.n_heads) + ',' + std::to_string(cell.len_in) + ',' +
                      std::to_string(cell.len_out);
    const InferenceRequest req{cell.len_in, cell.len_out};
    try {
      const SimResult sim = simulate_inference(m, hw, req, {});
      const BaselineResult base = baseline_inference_latency(m, req, dev);
      const LatencyReport& rep = sim.report;
      const double total_us = rep.us(rep.total_cycles);
      const double base_us = base.total_s() * 1e6;
      row += ',' + fmt_us(rep.us(rep.prefill_cycles));
      row += ',' + fmt_us(rep.us(rep.decode_cycles));
      row += ',' + fmt_us(total_us);
      row += ',' + fmt_us(base_us);
      row += ',' + fmt_speedup(total_us > 0 ? base_us / total_us : 0.0);
    } catch (const CapacityError&) {
      for (int k = 0; k < 5; ++k) row += ",capacity-error";
    }
    rows[i] = row + '\n';
  };

  const int jobs = std::max(1, spec.jobs);
  if (jobs == 1 || grid.size() <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex err_mu;
    const auto worker = [&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= grid.size()) return;
        try {
          run_cell(i);
        } catch (const std::exception& e) {
          const std::lock_guard<std::mutex> lock(err_mu);
          if (!failed.exchange(true)) first_error = e.what();
        }
      }
    };
    const int n_threads = std::min<int>(jobs, static_cast<int>(grid.size()));
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    if (failed.load()) throw ConfigError("sweep failed: " + first_error);
  }

  std::string out =
      "model,d_emb,layers,heads,len_in,len_out,prefill_us,decode_us,total_us,"
      "baseline_total_us,speedup\n";
  for (const std::string& row : rows) out += row;
  return out;
}

int cli_sweep(const SweepSpec& spec) {
  const std::string csv = sweep_csv(spec);
  if (spec.csv_path.empty()) {
    std::cout << csv;
  } else {
    write_text(spec.csv_path, csv);
  }
  return 0;
}

int cli_validate(const std::string& hw_name_or_path) {
  std::cout << validate_text(hw_name_or_path);
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CapacityError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const IoError*>(&e) != nullptr) return 4;
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
  return 1;
}

}  // namespace hpim
