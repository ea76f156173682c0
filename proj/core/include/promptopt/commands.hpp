#pragma once
// The four CLI entry points. Each returns a process exit code:
// 0 success, 2 usage/config problems, 3 runtime aborts (the aborted run
// directory keeps its partial artifacts).

#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

namespace promptopt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitAbort = 3;

// Runs (or resumes) an optimization described by a JSON config file.
// Completed runs are a no-op; interrupted runs restart after the last
// hash-verified iteration.
int cmd_optimize(const std::filesystem::path& config_path);

// Scores all persisted candidates on the dev split, picks the argmax,
// evaluates it on test, writes selection.json, and prints the table.
// lambda/confidence_aware override the persisted policy when present.
int cmd_select(const std::filesystem::path& run_dir, std::optional<double> lambda,
               std::optional<bool> confidence_aware);

// Pools one or more run directories into a transition table and emits
// alignment.csv, patch_deltas.csv, failure_deltas.csv, persistence.csv.
int cmd_analyze(const std::vector<std::filesystem::path>& run_dirs,
                const std::filesystem::path& out_dir, int k_topics = 10);

// Renders a markdown trajectory summary for one run. Deterministic:
// everything comes from stored artifacts, nothing is recomputed.
int cmd_report(const std::filesystem::path& run_dir, std::ostream& out);

}  // namespace promptopt::cli
