#include <CLI11.hpp>

#include <exception>
#include <iostream>

#include "hpim/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hpimsim: deterministic latency simulator for heterogeneous PIM LLM inference"};
  app.require_subcommand(1);

  hpim::RunSpec run;
  CLI::App* cmd_run = app.add_subcommand("run", "simulate one inference request");
  cmd_run->add_option("--model", run.model, "model preset name or config path");
  cmd_run->add_option("--hw", run.hw, "hardware preset name or config path");
  cmd_run->add_option("--in", run.len_in, "prompt length (tokens)");
  cmd_run->add_option("--out", run.len_out, "generated length (tokens)");
  cmd_run->add_option("--baseline", run.baseline, "baseline device name");
  cmd_run->add_option("--report", run.report_path, "report JSON path (default: stdout)");
  cmd_run->add_option("--trace", run.trace_path, "Chrome trace JSON path");
  cmd_run->add_option("--csv", run.csv_path, "breakdown CSV path");
  cmd_run->add_option("--params", run.params, "cost-model overrides (JSON object or file)");

  std::vector<std::string> sweep_models;
  std::vector<std::int64_t> sweep_in, sweep_out;
  hpim::SweepSpec sweep;
  CLI::App* cmd_sweep = app.add_subcommand("sweep", "run a model x length grid, emit CSV");
  cmd_sweep->add_option("--model", sweep_models, "model presets (repeat or comma-separate)")
      ->delimiter(',');
  cmd_sweep->add_option("--in", sweep_in, "prompt lengths, zipped with --out")->delimiter(',');
  cmd_sweep->add_option("--out", sweep_out, "generated lengths, zipped with --in")->delimiter(',');
  cmd_sweep->add_option("--hw", sweep.hw, "hardware preset name or config path");
  cmd_sweep->add_option("--baseline", sweep.baseline, "baseline device name");
  cmd_sweep->add_option("--csv", sweep.csv_path, "output CSV path (default: stdout)");
  cmd_sweep->add_option("--params", sweep.params, "cost-model overrides (JSON object or file)");
  cmd_sweep->add_option("--jobs", sweep.jobs, "concurrent simulations");

  std::string validate_hw = "hpim-default";
  CLI::App* cmd_validate =
      app.add_subcommand("validate", "derive peak metrics and check them against the datasheet");
  cmd_validate->add_option("config", validate_hw, "hardware preset name or config path");
  cmd_validate->add_option("--hw", validate_hw, "hardware preset name or config path")
      ->excludes("config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_run->parsed()) return hpim::cli_run(run);
    if (cmd_sweep->parsed()) {
      if (sweep_in.size() != sweep_out.size())
        throw hpim::ConfigError("--in and --out must have the same number of values");
      sweep.models = sweep_models;
      for (std::size_t i = 0; i < sweep_in.size(); ++i)
        sweep.lengths.emplace_back(sweep_in[i], sweep_out[i]);
      return hpim::cli_sweep(sweep);
    }
    if (cmd_validate->parsed()) return hpim::cli_validate(validate_hw);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hpim::exit_code_for(e);
  }
  return 0;
}
