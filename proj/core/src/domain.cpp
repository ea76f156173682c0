#include "promptopt/domain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace promptopt {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::qa_exact_match: return "qa_exact_match";
    case TaskKind::math: return "math";
    case TaskKind::numeric_formula: return "numeric_formula";
  }
  return "qa_exact_match";
}

TaskKind task_kind_from_string(std::string_view s) {
  if (s == "qa_exact_match") return TaskKind::qa_exact_match;
  if (s == "math") return TaskKind::math;
  if (s == "numeric_formula") return TaskKind::numeric_formula;
  throw PipelineError("config_error", "unknown task_kind: " + std::string(s));
}

std::string to_string(ParseStatus status) {
  switch (status) {
    case ParseStatus::ok: return "ok";
    case ParseStatus::repaired: return "repaired";
    case ParseStatus::failed: return "failed";
  }
  return "failed";
}

ParseStatus parse_status_from_string(std::string_view s) {
  if (s == "ok") return ParseStatus::ok;
  if (s == "repaired") return ParseStatus::repaired;
  if (s == "failed") return ParseStatus::failed;
  throw PipelineError("config_error", "unknown parse_status: " + std::string(s));
}

std::string to_string(DecisionKind kind) {
  return kind == DecisionKind::patch ? "patch" : "stop";
}

DecisionKind decision_kind_from_string(std::string_view s) {
  if (s == "patch") return DecisionKind::patch;
  if (s == "stop") return DecisionKind::stop;
  throw PipelineError("config_error", "unknown decision kind: " + std::string(s));
}

std::int64_t whitespace_token_count(std::string_view text) {
  std::int64_t count = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

PromptProgram make_prompt_program(std::string prompt_id, int iteration_index,
                                  std::string system_message,
                                  std::string user_instruction) {
  if (system_message.empty()) {
    throw std::invalid_argument("PromptProgram: system_message must be non-empty");
  }
  if (user_instruction.empty()) {
    throw std::invalid_argument("PromptProgram: user_instruction must be non-empty");
  }
  if (iteration_index < 0) {
    throw std::invalid_argument("PromptProgram: iteration_index must be >= 0");
  }
  PromptProgram p;
  p.prompt_id = std::move(prompt_id);
  p.iteration_index = iteration_index;
  p.system_message = std::move(system_message);
  p.user_instruction = std::move(user_instruction);
  p.length_chars = static_cast<std::int64_t>(p.system_message.size()) +
                   static_cast<std::int64_t>(p.user_instruction.size());
  p.length_tokens_approx = whitespace_token_count(p.system_message) +
                           whitespace_token_count(p.user_instruction);
  return p;
}

double clamp_confidence(double x) {
  if (!std::isfinite(x)) return 0.0;
  return std::clamp(x, 0.0, 1.0);
}

Memory memory_append(Memory memory, CompressedReport report) {
  const int expected = memory.reports.empty()
                           ? report.iteration_index  // first entry fixes the origin
                           : memory.reports.back().iteration_index + 1;
  if (report.iteration_index != expected) {
    throw std::invalid_argument("memory_append: iteration_index " +
                                std::to_string(report.iteration_index) +
                                " breaks contiguous ordering (expected " +
                                std::to_string(expected) + ")");
  }
  memory.reports.push_back(std::move(report));
  return memory;
}

std::vector<DatasetViolation> validate_dataset(const std::vector<Example>& examples) {
  std::vector<DatasetViolation> violations;
  std::unordered_set<std::string> seen;
  for (const Example& example : examples) {
    if (example.gold.empty()) {
      violations.push_back({example.example_id, "empty_gold",
                            "example '" + example.example_id + "' has an empty gold answer"});
    }
    if (!seen.insert(example.example_id).second) {
      violations.push_back({example.example_id, "duplicate_id",
                            "example_id '" + example.example_id + "' appears more than once"});
    }
  }
  return violations;
}

}  // namespace promptopt
