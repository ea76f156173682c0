#pragma once
// Shared domain types for the prompt-optimization engine.
//
// All types here are plain values: immutable after construction by
// convention, safe to copy across threads. Mutation happens by building
// new values (see memory_append).

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace promptopt {

// Error with a stable machine-readable kind tag. Kinds used across the
// engine: auth_error, timeout, rate_limited, malformed_response,
// empty_input, empty_candidates, induction_failed, protocol_violation,
// malformed_decision, config_error.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

enum class TaskKind { qa_exact_match, math, numeric_formula };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view s);

// Whitespace-delimited token count; provider-independent length proxy.
std::int64_t whitespace_token_count(std::string_view text);

// The unit under optimization. iteration_index is the position in the
// candidate sequence p_0..p_T; lengths are derived at construction.
struct PromptProgram {
  std::string prompt_id;
  int iteration_index = 0;
  std::string system_message;
  std::string user_instruction;
  std::int64_t length_chars = 0;
  std::int64_t length_tokens_approx = 0;
};

// Builds a PromptProgram with derived length fields filled in.
// Throws std::invalid_argument when either message is empty.
PromptProgram make_prompt_program(std::string prompt_id, int iteration_index,
                                  std::string system_message,
                                  std::string user_instruction);

struct ContextPassage {
  std::string title;
  std::string passage;
  bool operator==(const ContextPassage&) const = default;
};

struct Example {
  std::string example_id;
  std::string input;
  std::optional<std::vector<ContextPassage>> context;
  std::string gold;
  TaskKind task_kind = TaskKind::qa_exact_match;
  bool operator==(const Example&) const = default;
};

enum class ParseStatus { ok, repaired, failed };

std::string to_string(ParseStatus status);
ParseStatus parse_status_from_string(std::string_view s);

// One target-model response. parse_status == failed implies answer is
// empty and confidence is 0.
struct TargetOutput {
  std::string example_id;
  std::string reasoning;
  std::string answer;
  double confidence = 0.0;
  ParseStatus parse_status = ParseStatus::ok;
  bool confidence_clamped = false;
};

// Clamps to [0,1]; non-finite inputs map to 0. Idempotent.
double clamp_confidence(double x);

struct MetricSet {
  double task_score = 0.0;
  std::map<std::string, double> per_metric;  // always holds task_score, mean_confidence, brier
  double mean_confidence = 0.0;
  double brier = 0.0;
  int n_examples = 0;
  int n_incorrect = 0;
};

// One critic finding for a failed example. diagnosis_index is 1-based
// and capped at 3 per example.
struct FailureDiagnosis {
  std::string example_id;
  int diagnosis_index = 1;
  std::string label;
  std::string definition;
  std::string why;
  std::string basis;
};

struct DiagnosisRef {
  std::string example_id;
  int diagnosis_index = 1;
  bool operator==(const DiagnosisRef&) const = default;
};

// A cluster of semantically similar diagnoses. representatives hold at
// most 3 full records drawn from the members.
struct FailureTopic {
  std::string topic_label;
  std::string description;
  std::vector<DiagnosisRef> member_ids;
  std::vector<FailureDiagnosis> representatives;
  double size_fraction = 0.0;
};

// Structured evaluation report for one iteration: the prompt, its
// train-split metrics, and the retained failure topics sorted by
// size_fraction descending.
struct DiagnosticReport {
  int iteration_index = 0;
  PromptProgram prompt;
  MetricSet metrics;
  std::vector<FailureTopic> retained_topics;
};

struct TopicSummary {
  std::string topic_label;
  std::string description;
  double size_fraction = 0.0;
};

// Memory entry: a report with representatives and judged outputs dropped.
struct CompressedReport {
  int iteration_index = 0;
  MetricSet metrics;
  std::vector<TopicSummary> topic_summaries;
  std::optional<std::string> patch_summary;
};

// Append-only history of compressed reports, strictly ordered by
// iteration_index with no gaps.
struct Memory {
  std::vector<CompressedReport> reports;
};

// Returns a new Memory with the report appended. Throws
// std::invalid_argument if the entry would break the ordering invariant.
Memory memory_append(Memory memory, CompressedReport report);

enum class DecisionKind { patch, stop };

std::string to_string(DecisionKind kind);
DecisionKind decision_kind_from_string(std::string_view s);

// Optimizer verdict for one iteration. A decision is accepted only when
// tool_call_observed is true; kind == patch requires a new_prompt that
// differs from the current prompt.
struct PatchDecision {
  DecisionKind kind = DecisionKind::stop;
  std::optional<PromptProgram> new_prompt;
  std::string rationale;
  bool tool_call_observed = false;
};

struct DatasetViolation {
  std::string example_id;
  std::string kind;  // duplicate_id | empty_gold
  std::string message;
};

// Empty result iff every Example invariant holds and ids are unique.
// Violations are data, not faults.
std::vector<DatasetViolation> validate_dataset(const std::vector<Example>& examples);

}  // namespace promptopt
