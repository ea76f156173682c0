#pragma once
// The controller loop: one declared evaluate_prompt tool, one tool call
// per iteration enforced with a single reminder, PATCH/STOP decisions,
// and append-only memory across iterations.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "promptopt/diagnostics.hpp"
#include "promptopt/domain.hpp"
#include "promptopt/evaluation.hpp"
#include "promptopt/gateway.hpp"

namespace promptopt::optimize {

struct LoopConfig {
  int max_iterations = 10;  // iteration budget T
  llm::ProviderConfig optimizer_provider;
  int report_char_budget = 8000;
  bool confidence_aware = true;
  double optimizer_temperature = 1.0;
};

struct IterationRecord {
  int iteration_index = 0;
  PromptProgram prompt_before;
  DiagnosticReport report;
  PatchDecision decision;
  std::int64_t wall_time_ms = 0;
};

// Everything one evaluate_prompt call produces; pool and all_topics feed
// the diagnostics artifact, the report feeds the optimizer.
struct PipelineOutcome {
  evals::EvaluationRun run;
  std::vector<FailureDiagnosis> pool;
  std::vector<FailureTopic> all_topics;
  DiagnosticReport report;
};

// The tool behind evaluate_prompt: target evaluation on the train split,
// then critique -> cluster -> retain -> report. Critic or clusterer
// failures degrade to a report without topics; target auth errors
// propagate. Induction sampling is reseeded per iteration from
// (random_seed, iteration_index) so resumed runs replay identically.
class DiagnosticPipeline {
 public:
  DiagnosticPipeline(llm::ChatClient& client, std::vector<Example> train,
                     llm::ProviderConfig target, diag::CritiqueConfig critique,
                     diag::ClusteringConfig clustering, llm::ProviderConfig clusterer,
                     std::uint64_t random_seed, double target_temperature = 0.0,
                     double clusterer_temperature = 0.0);

  PipelineOutcome evaluate(const PromptProgram& prompt);

  const std::vector<Example>& train() const { return train_; }

 private:
  llm::ChatClient& client_;
  std::vector<Example> train_;
  llm::ProviderConfig target_;
  diag::CritiqueConfig critique_;
  diag::ClusteringConfig clustering_;
  llm::ProviderConfig clusterer_;
  std::uint64_t random_seed_;
  double target_temperature_;
  double clusterer_temperature_;
};

struct TurnResult {
  PipelineOutcome outcome;
  PatchDecision decision;
  int reminders_used = 0;
};

// One optimizer conversation: controller prompt + memory + current
// prompt, evaluate_prompt declared. A decision before the tool call gets
// one hard-rule reminder; a second protocol breach throws
// `protocol_violation`. Undecodable decisions throw `malformed_decision`
// (parse_structured's single repair already applied). Transport errors
// from the optimizer provider rethrow under their gateway kind.
TurnResult optimizer_turn(llm::ChatClient& client, const PromptProgram& current,
                          const Memory& memory, const LoopConfig& cfg,
                          DiagnosticPipeline& pipeline);

// Persistence hooks, invoked before any error surfaces so partial
// trajectories are never lost. on_iteration receives the memory state
// after the append for iteration record.iteration_index.
struct LoopHooks {
  std::function<void(const IterationRecord&, const PipelineOutcome&, const Memory&)>
      on_iteration;
  std::function<void(int iteration_index, const PromptProgram& current,
                     const PipelineError& error)>
      on_abort;
};

struct LoopOutcome {
  std::vector<IterationRecord> records;
  Memory memory;
  bool stopped = false;  // optimizer said STOP (vs budget exhaustion)
};

// Environment variable for crash-injection tests: when set to integer t,
// the loop calls _Exit(42) right after persisting iteration t.
inline constexpr const char* kExitAfterIterationEnv = "PROMPTOPT_EXIT_AFTER_ITERATION";

// Drives optimizer_turn from `start` (prompt_before = seed) until STOP,
// abort, or max_iterations records exist. Memory obeys Eq-style
// append-only growth: one compressed report per completed iteration.
// start/initial_memory support resuming a partial trajectory.
LoopOutcome run_optimization(llm::ChatClient& client, const PromptProgram& seed,
                             const LoopConfig& cfg, DiagnosticPipeline& pipeline,
                             const LoopHooks& hooks = {}, int start_iteration = 0,
                             Memory initial_memory = {});

void to_json(nlohmann::json& j, const IterationRecord& r);
void from_json(const nlohmann::json& j, IterationRecord& r);

}  // namespace promptopt::optimize
