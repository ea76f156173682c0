// promptopt: drive an LLM prompt-optimization loop and inspect its runs.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "promptopt/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Reflective prompt optimization: evaluate, diagnose, patch, repeat."};
  app.require_subcommand(1);

  std::string config_path;
  auto* optimize = app.add_subcommand("optimize", "Run or resume an optimization loop");
  optimize->add_option("--config", config_path, "JSON run config")->required();

  std::string select_run;
  double lambda = 0.0;
  auto* select = app.add_subcommand("select", "Pick the best candidate prompt of a run");
  select->add_option("--run", select_run, "Run directory")->required();
  auto* lambda_opt = select->add_option("--lambda", lambda, "Brier penalty weight");
  auto* aware_flag =
      select->add_flag("--confidence-aware", "Score with task_score - lambda * brier");

  std::vector<std::string> analyze_runs;
  std::string analyze_out;
  int k_topics = 10;
  auto* analyze = app.add_subcommand("analyze", "Emit CSV analytics over one or more runs");
  analyze->add_option("--runs", analyze_runs, "Run directories")->required()->expected(-1);
  analyze->add_option("--out", analyze_out, "Output directory for CSV files")->required();
  analyze->add_option("--k-topics", k_topics, "Patch-atom topic count");

  std::string report_run;
  auto* report = app.add_subcommand("report", "Render a markdown summary of a run");
  report->add_option("--run", report_run, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : promptopt::cli::kExitConfig;
  }

  if (optimize->parsed()) {
    return promptopt::cli::cmd_optimize(config_path);
  }
  if (select->parsed()) {
    std::optional<double> lambda_override;
    if (lambda_opt->count() > 0) lambda_override = lambda;
    std::optional<bool> aware_override;
    if (aware_flag->count() > 0) aware_override = true;
    return promptopt::cli::cmd_select(select_run, lambda_override, aware_override);
  }
  if (analyze->parsed()) {
    std::vector<std::filesystem::path> dirs(analyze_runs.begin(), analyze_runs.end());
    return promptopt::cli::cmd_analyze(dirs, analyze_out, k_topics);
  }
  if (report->parsed()) {
    return promptopt::cli::cmd_report(report_run, std::cout);
  }
  return promptopt::cli::kExitConfig;
}
