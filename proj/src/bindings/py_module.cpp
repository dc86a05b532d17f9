#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hpim/baseline.hpp"
#include "hpim/cli.hpp"
#include "hpim/presets.hpp"

namespace py = pybind11;

namespace {

std::string run_report_json(const std::string& model, const std::string& hw,
                            std::int64_t len_in, std::int64_t len_out,
                            const std::string& baseline) {
  const hpim::ModelConfig m = hpim::resolve_model(model);
  const hpim::HardwareConfig h = hpim::resolve_hardware(hw);
  const hpim::InferenceRequest req{len_in, len_out};
  const hpim::SimResult sim = hpim::simulate_inference(m, h, req, {});
  const hpim::BaselineResult base =
      hpim::baseline_inference_latency(m, req, hpim::resolve_baseline(baseline, h));
  return hpim::report_json(m, h, req, sim.report, base);
}

std::string sweep_csv_py(const std::vector<std::string>& models,
                         const std::vector<std::pair<std::int64_t, std::int64_t>>& lengths,
                         const std::string& hw, const std::string& baseline, int jobs) {
  hpim::SweepSpec spec;
  spec.models = models;
  spec.lengths = lengths;
  spec.hw = hw;
  spec.baseline = baseline;
  spec.jobs = jobs;
  return hpim::sweep_csv(spec);
}

std::int64_t kv_cache_bytes_py(const std::string& model, std::int64_t seq) {
  return hpim::kv_cache_bytes(hpim::resolve_model(model), seq);
}

std::int64_t model_weight_bytes_py(const std::string& model) {
  return hpim::model_weight_bytes(hpim::resolve_model(model));
}

py::dict derived_metrics_py(const std::string& hw) {
  const hpim::DerivedMetrics dm = hpim::derive_metrics(hpim::resolve_hardware(hw));
  py::dict d;
  d["tcu_peak_flops"] = dm.tcu_peak_flops;
  d["pimunit_peak_flops_per_core"] = dm.pimunit_peak_flops_per_core;
  d["pimunit_peak_flops_total"] = dm.pimunit_peak_flops_total;
  d["hbm_pim_peak_flops"] = dm.hbm_pim_peak_flops;
  d["sram_capacity_bytes"] = dm.sram_capacity_bytes;
  d["dram_capacity_bytes"] = dm.dram_capacity_bytes;
  d["dram_ext_bw"] = dm.dram_ext_bw;
  d["dram_internal_bw"] = dm.dram_internal_bw;
  d["n_channels"] = dm.n_channels;
  d["n_pch"] = dm.n_pch;
  d["n_banks"] = dm.n_banks;
  return d;
}

}  // namespace

PYBIND11_MODULE(_hpimsim, m) {
  m.doc() = "Deterministic latency simulator for LLM inference on a heterogeneous "
            "SRAM-PIM + HBM-PIM accelerator";

  py::register_exception<hpim::ConfigError>(m, "ConfigError");
  py::register_exception<hpim::CapacityError>(m, "CapacityError");
  py::register_exception<hpim::IoError>(m, "IoError");

  m.def("model_presets", &hpim::model_preset_names, "bundled model preset names");
  m.def("run_report_json", &run_report_json, py::arg("model"), py::arg("hw") = "hpim-default",
        py::arg("len_in") = 1, py::arg("len_out") = 0, py::arg("baseline") = "a100",
        "simulate one request and return the report as a JSON string");
  m.def("sweep_csv", &sweep_csv_py, py::arg("models"), py::arg("lengths"),
        py::arg("hw") = "hpim-default", py::arg("baseline") = "a100", py::arg("jobs") = 1,
        "run a model x length grid and return the CSV table");
  m.def("validate_text", &hpim::validate_text, py::arg("hw") = "hpim-default",
        "derived peak metrics with datasheet PASS/FAIL lines");
  m.def("kv_cache_bytes", &kv_cache_bytes_py, py::arg("model"), py::arg("seq"));
  m.def("model_weight_bytes", &model_weight_bytes_py, py::arg("model"));
  m.def("derived_metrics", &derived_metrics_py, py::arg("hw") = "hpim-default");
}
