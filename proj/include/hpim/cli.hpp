#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpim/baseline.hpp"
#include "hpim/engine.hpp"

namespace hpim {

struct RunSpec {
  std::string model = "opt-13b";
  std::string hw = "hpim-default";
  std::int64_t len_in = 1;
  std::int64_t len_out = 0;
  std::string baseline = "a100";
  std::string report_path;  // empty: report JSON to stdout
  std::string trace_path;
  std::string csv_path;
  std::string params;  // cost-model overrides: JSON object text or file path
};

struct SweepSpec {
  std::vector<std::string> models;
  std::vector<std::pair<std::int64_t, std::int64_t>> lengths;  // (len_in, len_out)
  std::string hw = "hpim-default";
  std::string baseline = "a100";
  std::string csv_path;  // empty: stdout
  std::string params;
  int jobs = 1;
};

// Library entry points behind the CLI subcommands. Throw Config/Capacity/Io
// errors; main() maps them to exit codes 2/3/4.
std::string report_json(const ModelConfig& m, const HardwareConfig& hw,
                        const InferenceRequest& req, const LatencyReport& rep,
                        const BaselineResult& base);
std::string breakdown_csv(const LatencyReport& rep);
std::string sweep_csv(const SweepSpec& spec);
std::string validate_text(const std::string& hw_name_or_path);

int cli_run(const RunSpec& spec);
int cli_sweep(const SweepSpec& spec);
int cli_validate(const std::string& hw_name_or_path);

int exit_code_for(const std::exception& e);

}  // namespace hpim
