#pragma once
// Target-model evaluation: runs a prompt over a split, judges answers per
// task kind, and computes the metric set (task score + calibration).

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptopt/domain.hpp"
#include "promptopt/gateway.hpp"

namespace promptopt::evals {

enum class Split { train, dev, test };

std::string to_string(Split split);
Split split_from_string(std::string_view s);

// correct ⇔ score = 1.0 for exact-match kinds; the math kind keeps the
// weaker correct ⇔ score > 0 so graded scorers can slot in later.
struct JudgedExample {
  Example example;
  TargetOutput output;
  bool correct = false;
  double score = 0.0;
};

struct EvaluationRun {
  PromptProgram prompt;
  Split split_name = Split::train;
  std::vector<JudgedExample> judged;
  MetricSet metrics;
};

// Answer canonicalization before comparison. qa_exact_match lowercases,
// strips punctuation, drops the articles a/an/the, and collapses
// whitespace. math strips LaTeX wrappers \( \) \[ \] $...$ and surrounding
// braces, lowercases, and collapses whitespace (punctuation kept: signs
// and separators are meaning-bearing). numeric_formula normalizes like qa
// only on its string-match fallback.
std::string normalize_answer(std::string_view text, TaskKind kind);

// Numeric reading tolerant of $, %, thousands separators. Empty result
// when the remainder is not a full number.
bool try_parse_number(std::string_view text, double& out);

// Pure per-example verdict. Throws std::invalid_argument when
// output.example_id does not match.
JudgedExample judge(const Example& example, const TargetOutput& output);

// task_score = mean(score), mean_confidence = mean(confidence),
// brier = mean((confidence - correct01)^2). Throws `empty_input`.
MetricSet compute_metrics(const std::vector<JudgedExample>& judged);

// Unweighted mean of per-task final scores on the 0-100 scale. Throws
// `empty_input`.
double aggregate_across_tasks(const std::vector<double>& final_scores);

// Fans the split out through the gateway (bounded parallelism) and parses
// each structured output. Per-example transport or parse failures become
// parse_status = failed with an empty answer and confidence 0; auth
// errors abort the whole call.
std::vector<TargetOutput> run_target(llm::ChatClient& client, const PromptProgram& prompt,
                                     const std::vector<Example>& examples,
                                     const llm::ProviderConfig& target,
                                     double temperature = 0.0);

EvaluationRun evaluate_split(llm::ChatClient& client, const PromptProgram& prompt,
                             const std::vector<Example>& examples, Split split,
                             const llm::ProviderConfig& target, double temperature = 0.0);

void to_json(nlohmann::json& j, const JudgedExample& v);
void from_json(const nlohmann::json& j, JudgedExample& v);
void to_json(nlohmann::json& j, const EvaluationRun& v);
void from_json(const nlohmann::json& j, EvaluationRun& v);

}  // namespace promptopt::evals
