#include "promptopt/optimizer.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "promptopt/json_io.hpp"
#include "promptopt/templates.hpp"

namespace promptopt::optimize {

using nlohmann::json;

namespace {

// splitmix64 over (seed, iteration) so every iteration derives its own
// stream and resumed runs replay the same samples.
std::uint64_t iteration_seed(std::uint64_t seed, std::uint64_t iteration) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (iteration + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

DiagnosticPipeline::DiagnosticPipeline(llm::ChatClient& client, std::vector<Example> train,
                                       llm::ProviderConfig target,
                                       diag::CritiqueConfig critique,
                                       diag::ClusteringConfig clustering,
                                       llm::ProviderConfig clusterer,
                                       std::uint64_t random_seed, double target_temperature,
                                       double clusterer_temperature)
    : client_(client),
      train_(std::move(train)),
      target_(std::move(target)),
      critique_(std::move(critique)),
      clustering_(clustering),
      clusterer_(std::move(clusterer)),
      random_seed_(random_seed),
      target_temperature_(target_temperature),
      clusterer_temperature_(clusterer_temperature) {
  if (train_.empty()) {
    throw PipelineError("empty_input", "diagnostic pipeline needs a non-empty train split");
  }
}

PipelineOutcome DiagnosticPipeline::evaluate(const PromptProgram& prompt) {
  PipelineOutcome outcome;
  outcome.run = evals::evaluate_split(client_, prompt, train_, evals::Split::train, target_,
                                      target_temperature_);

  const auto failures = diag::detect_failures(outcome.run);
  if (!failures.empty()) {
    outcome.pool = diag::critique_failures(client_, failures, critique_);
  }
  if (!outcome.pool.empty()) {
    try {
      outcome.all_topics = diag::cluster_diagnoses(
          client_, outcome.pool, clustering_, clusterer_,
          iteration_seed(random_seed_, static_cast<std::uint64_t>(prompt.iteration_index)));
    } catch (const PipelineError& e) {
      // A broken clusterer degrades the report to metrics-only.
      std::fprintf(stderr, "warning: clustering failed (%s): %s\n", e.kind().c_str(),
                   e.what());
    }
  }
  outcome.report = diag::build_report(prompt, outcome.run,
                                      diag::retain_topics(outcome.all_topics, clustering_));
  return outcome;
}

namespace {

constexpr const char* kReminder =
    "Hard rule reminder: you must call evaluate_prompt exactly once and read its result "
    "before any PATCH or STOP decision. Call the tool now.";

constexpr const char* kAlreadyCalled =
    "Error: evaluate_prompt was already called this iteration. Reply with your PATCH or "
    "STOP decision as JSON now.";

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

PatchDecision parse_decision(const llm::ChatResponse& response, const PromptProgram& current) {
  const auto parsed = llm::parse_structured(
      response, json{{"required", json::array({"decision"})}});
  if (parsed.status == ParseStatus::failed) {
    throw PipelineError("malformed_decision",
                        "optimizer decision is not parseable JSON: " + response.text);
  }
  const std::string kind = upper(parsed.value.value("decision", ""));
  const std::string rationale = parsed.value.value("rationale", "");

  PatchDecision decision;
  decision.rationale = rationale;
  decision.tool_call_observed = true;
  if (kind == "STOP") {
    decision.kind = DecisionKind::stop;
    return decision;
  }
  if (kind != "PATCH") {
    throw PipelineError("malformed_decision", "unknown decision kind: " + kind);
  }
  if (!parsed.value.contains("new_prompt") || !parsed.value.at("new_prompt").is_object()) {
    throw PipelineError("malformed_decision", "PATCH decision carries no new_prompt");
  }
  const json& np = parsed.value.at("new_prompt");
  const std::string system = np.value("system_message", current.system_message);
  const std::string user = np.value("user_instruction", current.user_instruction);
  if (system == current.system_message && user == current.user_instruction) {
    throw PipelineError("malformed_decision", "PATCH does not change the prompt");
  }
  const int next_index = current.iteration_index + 1;
  try {
    decision.kind = DecisionKind::patch;
    decision.new_prompt =
        make_prompt_program("p" + std::to_string(next_index), next_index, system, user);
  } catch (const std::invalid_argument& e) {
    throw PipelineError("malformed_decision", std::string("invalid new_prompt: ") + e.what());
  }
  return decision;
}

}  // namespace

TurnResult optimizer_turn(llm::ChatClient& client, const PromptProgram& current,
                          const Memory& memory, const LoopConfig& cfg,
                          DiagnosticPipeline& pipeline) {
  llm::ChatRequest req;
  req.messages = {
      llm::system_message(templates::controller_system(cfg.confidence_aware)),
      llm::user_message(templates::render_controller_user(current, memory))};
  req.tools = {templates::evaluate_prompt_tool_decl()};
  req.temperature = cfg.optimizer_temperature;

  TurnResult result;
  bool tool_executed = false;

  // Bounded exchange: tool call + decision + at most one reminder. The
  // hard bound keeps a misbehaving provider from spinning.
  for (int exchange = 0; exchange < 6; ++exchange) {
    const auto response = client.complete(req, cfg.optimizer_provider);
    if (llm::is_error(response)) {
      throw PipelineError(response.error_kind.empty() ? "transport_error"
                                                      : response.error_kind,
                          "optimizer call failed: " + response.error_message);
    }

    if (response.finish_reason == llm::FinishReason::tool_call) {
      const llm::ToolCall& call = response.tool_calls.front();
      if (call.name == "evaluate_prompt" && !tool_executed) {
        result.outcome = pipeline.evaluate(current);
        const std::string report_text = diag::render_report(
            result.outcome.report, cfg.report_char_budget, cfg.confidence_aware);
        req.messages.push_back(llm::assistant_tool_call_message(response.tool_calls));
        req.messages.push_back(llm::tool_result_message(call, report_text));
        tool_executed = true;
        continue;
      }
      // Repeat or unknown tool call: one corrective exchange, then abort.
      if (result.reminders_used >= 1) {
        throw PipelineError("protocol_violation",
                            "optimizer repeated a tool call after the corrective reminder");
      }
      ++result.reminders_used;
      req.messages.push_back(llm::assistant_tool_call_message(response.tool_calls));
      req.messages.push_back(llm::tool_result_message(
          call, tool_executed ? kAlreadyCalled
                              : "Error: unknown tool. Call evaluate_prompt."));
      continue;
    }

    // Plain text answer.
    if (!tool_executed) {
      if (result.reminders_used >= 1) {
        throw PipelineError("protocol_violation",
                            "optimizer decided without calling evaluate_prompt, even after "
                            "the hard-rule reminder");
      }
      ++result.reminders_used;
      req.messages.push_back(llm::assistant_message(response.text));
      req.messages.push_back(llm::user_message(kReminder));
      continue;
    }
    result.decision = parse_decision(response, current);
    return result;
  }
  throw PipelineError("protocol_violation", "optimizer exchange exceeded the turn bound");
}

LoopOutcome run_optimization(llm::ChatClient& client, const PromptProgram& seed,
                             const LoopConfig& cfg, DiagnosticPipeline& pipeline,
                             const LoopHooks& hooks, int start_iteration,
                             Memory initial_memory) {
  LoopOutcome outcome;
  outcome.memory = std::move(initial_memory);
  PromptProgram current = seed;

  for (int t = start_iteration; t < cfg.max_iterations; ++t) {
    const auto started = std::chrono::steady_clock::now();
    TurnResult turn;
    try {
      turn = optimizer_turn(client, current, outcome.memory, cfg, pipeline);
    } catch (const PipelineError& e) {
      if (hooks.on_abort) hooks.on_abort(t, current, e);
      throw;
    }
    const auto wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - started)
                                  .count();

    outcome.memory = memory_append(
        outcome.memory,
        diag::compress_for_memory(turn.outcome.report,
                                  turn.decision.rationale.empty()
                                      ? std::nullopt
                                      : std::optional<std::string>(turn.decision.rationale)));

    IterationRecord record;
    record.iteration_index = t;
    record.prompt_before = current;
    record.report = turn.outcome.report;
    record.decision = turn.decision;
    record.wall_time_ms = wall_time_ms;
    outcome.records.push_back(record);
    if (hooks.on_iteration) hooks.on_iteration(record, turn.outcome, outcome.memory);

    // Crash-injection hook for resume tests: die right after the
    // iteration is persisted, as an abrupt kill would.
    if (const char* crash_after = std::getenv(kExitAfterIterationEnv)) {
      if (std::atoi(crash_after) == t) std::_Exit(42);
    }

    if (record.decision.kind == DecisionKind::stop) {
      outcome.stopped = true;
      break;
    }
    current = *record.decision.new_prompt;
  }
  return outcome;
}

void to_json(json& j, const IterationRecord& r) {
  j = json{{"iteration_index", r.iteration_index},
           {"prompt_before", r.prompt_before},
           {"report", r.report},
           {"decision", r.decision},
           {"wall_time_ms", r.wall_time_ms}};
}

void from_json(const json& j, IterationRecord& r) {
  j.at("iteration_index").get_to(r.iteration_index);
  j.at("prompt_before").get_to(r.prompt_before);
  j.at("report").get_to(r.report);
  j.at("decision").get_to(r.decision);
  r.wall_time_ms = j.value("wall_time_ms", std::int64_t{0});
}

}  // namespace promptopt::optimize
