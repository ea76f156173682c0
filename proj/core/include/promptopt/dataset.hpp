#pragma once
// Dataset files are JSON Lines: one Example per line with fields
// {"id", "input", "context", "gold", "task_kind"}. UTF-8, LF endings.

#include <filesystem>
#include <vector>

#include "promptopt/domain.hpp"

namespace promptopt {

// Throws PipelineError("config_error") on unreadable files or malformed
// lines (message names the file and 1-based line number).
std::vector<Example> load_dataset_jsonl(const std::filesystem::path& path);

void save_dataset_jsonl(const std::filesystem::path& path,
                        const std::vector<Example>& examples);

}  // namespace promptopt
