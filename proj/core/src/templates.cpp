#include "promptopt/templates.hpp"

#include <cstdio>
#include <stdexcept>

namespace promptopt::templates {

using nlohmann::json;

std::string to_string(TaskTemplate t) {
  switch (t) {
    case TaskTemplate::qa: return "qa";
    case TaskTemplate::math: return "math";
    case TaskTemplate::formula: return "formula";
  }
  return "qa";
}

TaskTemplate template_from_string(std::string_view s) {
  if (s == "qa") return TaskTemplate::qa;
  if (s == "math") return TaskTemplate::math;
  if (s == "formula") return TaskTemplate::formula;
  throw std::invalid_argument("unknown template id: " + std::string(s));
}

TaskTemplate template_for_kind(TaskKind kind) {
  switch (kind) {
    case TaskKind::qa_exact_match: return TaskTemplate::qa;
    case TaskKind::math: return TaskTemplate::math;
    case TaskKind::numeric_formula: return TaskTemplate::formula;
  }
  return TaskTemplate::qa;
}

namespace {

constexpr const char* kQaSeedSystem =
    "You are tasked with answering questions using only the provided context.";

constexpr const char* kQaSeedUser =
    "- Reason step by step using only the provided context.\n"
    "- Be concise but thorough in your justification.\n"
    "- Before answering, verify that your answer is supported by the context.\n"
    "\n"
    "Your output should be a JSON with fields:\n"
    "- justification: a context-grounded explanation of how you reached the answer.\n"
    "- answer: your concise final answer.\n"
    "- confidence: a number in [0,1] representing your confidence in the final answer.";

constexpr const char* kMathSeedSystem =
    "Solve the math problem step by step and give the final answer in exactly the format "
    "requested by the question.";

constexpr const char* kMathSeedUser =
    "Your output should be a JSON with fields:\n"
    "- reasoning: your chain of thought / reasoning / thinking process, detailed analysis "
    "and calculations.\n"
    "- answer: final answer in exactly the format requested by the question.\n"
    "- confidence: a number in [0,1] representing your confidence in the final answer.\n"
    "\n"
    "Output only valid JSON that matches the required schema.";

constexpr const char* kFormulaSeedSystem =
    "You are an analysis expert tasked with answering questions using your knowledge.";

constexpr const char* kFormulaSeedUser =
    "- Show your reasoning step-by-step\n"
    "- Be concise but thorough in your analysis\n"
    "- Double-check your calculations and logic before providing the final answer\n"
    "\n"
    "Your output should be a JSON with fields:\n"
    "- reasoning: your chain of thought / reasoning / thinking process, detailed analysis "
    "and calculations\n"
    "- answer: your concise final answer.\n"
    "- confidence: a number in [0,1] representing your confidence in the final answer.";

}  // namespace

PromptProgram seed_prompt(TaskTemplate t) {
  switch (t) {
    case TaskTemplate::qa:
      return make_prompt_program("p0", 0, kQaSeedSystem, kQaSeedUser);
    case TaskTemplate::math:
      return make_prompt_program("p0", 0, kMathSeedSystem, kMathSeedUser);
    case TaskTemplate::formula:
      return make_prompt_program("p0", 0, kFormulaSeedSystem, kFormulaSeedUser);
  }
  throw std::invalid_argument("unknown template");
}

std::string render_target_user(const PromptProgram& prompt, const Example& example) {
  std::string out = prompt.user_instruction;
  out += "\n";
  if (example.context.has_value() && !example.context->empty()) {
    out += "\nContext:\n";
    for (const ContextPassage& p : *example.context) {
      out += "[" + p.title + "] " + p.passage + "\n";
    }
  }
  out += "\nQuestion: " + example.input;
  return out;
}

json target_response_schema() {
  return json{{"type", "object"},
              {"properties",
               {{"reasoning", {{"type", "string"}}},
                {"justification", {{"type", "string"}}},
                {"answer", {{"type", "string"}}},
                {"confidence", {{"type", "number"}}}}},
              {"required", json::array({"answer", "confidence"})}};
}

namespace {

constexpr const char* kQaCritic =
    "You are a strict evaluation critic for QA failures.\n"
    "You are given ONE QA trace:\n"
    "- question\n"
    "- context (titles + snippets)\n"
    "- gold answer\n"
    "- predicted answer\n"
    "- model confidence\n"
    "- model reasoning\n"
    "\n"
    "Your goal is to diagnose WHY the target model produced the wrong answer.\n"
    "\n"
    "Instructions:\n"
    "1. Produce 1-3 failure_modes with:\n"
    "   - label: 2-6 words, consistent across similar errors\n"
    "   - definition: Comprehensive explanation of the failure mode\n"
    "   - why: brief explanation for THIS example\n"
    "   - basis: cite what in the trace/reasoning shows this\n"
    "2. Make labels concrete and clusterable:\n"
    "   - Prefer labels like \"wrong bridge entity\" over long sentences.\n"
    "   - Do not include entity names, dates, or example-specific details in labels.\n"
    "3. If you cannot identify a clear failure mode, return an empty list.\n"
    "4. Output ONLY valid JSON matching the schema (no extra text).";

constexpr const char* kMathCritic =
    "You are a strict evaluation critic for math failures.\n"
    "You are given one failed model attempt with:\n"
    "- task metadata\n"
    "- question\n"
    "- gold answer\n"
    "- predicted answer\n"
    "- model confidence\n"
    "- model reasoning\n"
    "\n"
    "Your goal is to diagnose why the model failed.\n"
    "\n"
    "Instructions:\n"
    "1. Produce 1-3 failure_modes with:\n"
    "   - label: 2-6 words, consistent across similar errors\n"
    "   - definition: Comprehensive explanation of the failure mode\n"
    "   - why: brief, self-contained explanation for THIS example\n"
    "   - basis: cite what in the trace/reasoning shows this\n"
    "2. Make labels concrete and clusterable.\n"
    "3. If you cannot identify a clear failure mode, return an empty list.\n"
    "4. Output only valid JSON matching the schema.";

constexpr const char* kFormulaCritic =
    "You are a strict evaluation critic for formula-construction failures.\n"
    "You are given ONE QA trace with:\n"
    "- question\n"
    "- gold answer\n"
    "- predicted answer\n"
    "- model confidence\n"
    "- model reasoning\n"
    "\n"
    "Your job is to diagnose why the model produced the wrong answer.\n"
    "\n"
    "Instructions:\n"
    "1. Produce 1-3 failure_modes with:\n"
    "   - label: 2-6 words, consistent across similar errors\n"
    "   - definition: Comprehensive explanation of the failure mode\n"
    "   - why: brief, self-contained explanation for THIS example, e.g. \"The question "
    "asked for the city's location relative to Rome, but the model returned the city name "
    "instead.\"\n"
    "   - basis: cite what in trace/reasoning shows this\n"
    "2. Focus on actionable failure modes.\n"
    "3. If you cannot identify a clear failure mode, return an empty list.\n"
    "4. Output ONLY valid JSON matching the schema.";

std::string format_double(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace

std::string critic_system(TaskTemplate t) {
  switch (t) {
    case TaskTemplate::qa: return kQaCritic;
    case TaskTemplate::math: return kMathCritic;
    case TaskTemplate::formula: return kFormulaCritic;
  }
  return kQaCritic;
}

std::string render_critic_user(const Example& example, const TargetOutput& output) {
  std::string out = "question: " + example.input + "\n";
  if (example.context.has_value() && !example.context->empty()) {
    out += "context:\n";
    for (const ContextPassage& p : *example.context) {
      out += "- [" + p.title + "] " + p.passage + "\n";
    }
  }
  out += "gold answer: " + example.gold + "\n";
  out += "predicted answer: " + output.answer + "\n";
  out += "model confidence: " + format_double(output.confidence, "%.4f") + "\n";
  out += "model reasoning: " + output.reasoning;
  if (output.parse_status == ParseStatus::failed) {
    out += "\nnote: the model output could not be parsed as JSON; the prediction is empty.";
  }
  return out;
}

json critic_response_schema() {
  return json{
      {"type", "object"},
      {"properties",
       {{"failure_modes",
         {{"type", "array"},
          {"items",
           {{"type", "object"},
            {"properties",
             {{"label", {{"type", "string"}}},
              {"definition", {{"type", "string"}}},
              {"why", {{"type", "string"}}},
              {"basis", {{"type", "string"}}}}},
            {"required", json::array({"label", "definition", "why", "basis"})}}}}}}},
      {"required", json::array({"failure_modes"})}};
}

std::string induction_system() {
  return "You group failure diagnoses into recurring failure topics.\n"
         "You will be given a numbered sample of diagnosis texts and a topic count K.\n"
         "Propose exactly K topics covering the sample. For each topic give:\n"
         "- label: 2-6 words, consistent and generic\n"
         "- description: one or two sentences describing the failure mode\n"
         "Output ONLY valid JSON: {\"topics\": [{\"label\": \"...\", \"description\": \"...\"}]}";
}

std::string render_induction_user(const std::vector<std::string>& sampled_texts, int k_topics) {
  std::string out = "K = " + std::to_string(k_topics) + "\n\nDiagnoses:\n";
  int n = 1;
  for (const std::string& text : sampled_texts) {
    out += std::to_string(n++) + ". " + text + "\n";
  }
  return out;
}

json induction_response_schema() {
  return json{{"type", "object"},
              {"properties",
               {{"topics",
                 {{"type", "array"},
                  {"items",
                   {{"type", "object"},
                    {"properties",
                     {{"label", {{"type", "string"}}},
                      {"description", {{"type", "string"}}}}},
                    {"required", json::array({"label", "description"})}}}}}}},
              {"required", json::array({"topics"})}};
}

std::string assignment_system() {
  return "You assign failure diagnoses to the closest topic from a fixed list.\n"
         "Assign every diagnosis to exactly one topic label from the list; never invent "
         "new labels.\n"
         "Output ONLY valid JSON: {\"assignments\": [{\"item\": <number>, \"label\": "
         "\"<topic label>\"}]}";
}

std::string render_assignment_user(
    const std::vector<std::pair<std::string, std::string>>& topics,
    const std::vector<std::pair<int, std::string>>& numbered_items) {
  std::string out = "Topics:\n";
  for (const auto& [label, description] : topics) {
    out += "- " + label + ": " + description + "\n";
  }
  out += "\nDiagnoses:\n";
  for (const auto& [index, text] : numbered_items) {
    out += std::to_string(index) + ". " + text + "\n";
  }
  return out;
}

json assignment_response_schema() {
  return json{{"type", "object"},
              {"properties",
               {{"assignments",
                 {{"type", "array"},
                  {"items",
                   {{"type", "object"},
                    {"properties",
                     {{"item", {{"type", "integer"}}},
                      {"label", {{"type", "string"}}}}},
                    {"required", json::array({"item", "label"})}}}}}}},
              {"required", json::array({"assignments"})}};
}

std::string controller_system(bool confidence_aware) {
  std::string out =
      "You are a prompt-optimization controller.\n"
      "\n"
      "Your goal is to iteratively improve a PromptProgram for the target task.\n"
      "\n"
      "At each iteration you must:\n"
      "1. Call evaluate_prompt exactly once on the CURRENT PromptProgram.\n"
      "2. Read the returned evaluation report with insights.\n"
      "3. Output either a PATCH or STOP.\n"
      "\n"
      "Optimization target:\n"
      "- Primary: improve task performance on the training split.\n";
  if (confidence_aware) {
    out +=
        "- Secondary: improve calibration (lower Brier / reduce overconfidence) without "
        "hurting task performance.\n";
  }
  out +=
      "\n"
      "Decision guidance:\n"
      "- Use the returned evaluation report as the primary decision signal, especially its "
      "metrics and any deltas vs previous/best.\n"
      "- Use history only to detect trajectory, regressions, and previously ineffective "
      "edits.\n"
      "\n"
      "Patch constraints:\n"
      "- Edits should be targeted to the failure modes, and designed to address their "
      "underlying issues with concrete guidance.\n"
      "- Avoid vague or generic guidance that only restates the failure; specify concrete "
      "checks, comparisons, extractions, or verifications.\n"
      "- Prefer revising, merging, deleting, or reorganizing existing instructions over "
      "adding new broad rules.\n"
      "- Keep the output contract stable (JSON schema and required fields).\n"
      "- Avoid redundant or conflicting rules; consolidate instructions when possible.\n"
      "\n"
      "Stop condition:\n"
      "- Output STOP if training-set performance has plateaued or further edits are "
      "unlikely to help.\n"
      "\n"
      "Hard rule:\n"
      "- Do NOT propose a PATCH or STOP decision before calling evaluate_prompt and "
      "receiving its result.\n"
      "\n"
      "Decision format, once the tool result has arrived. Output only valid JSON:\n"
      "{\"decision\": \"PATCH\", \"rationale\": \"...\", \"new_prompt\": "
      "{\"system_message\": \"...\", \"user_instruction\": \"...\"}}\n"
      "or\n"
      "{\"decision\": \"STOP\", \"rationale\": \"...\"}\n"
      "A PATCH's new_prompt must differ from the current PromptProgram; unchanged fields "
      "may be omitted from new_prompt.";
  return out;
}

std::string render_memory(const Memory& memory) {
  if (memory.reports.empty()) return "none (first iteration)";
  std::string out;
  for (const CompressedReport& r : memory.reports) {
    out += "## Iteration " + std::to_string(r.iteration_index) + "\n";
    out += "metrics: task_score=" + format_double(r.metrics.task_score, "%.4f") +
           " mean_confidence=" + format_double(r.metrics.mean_confidence, "%.4f") +
           " brier=" + format_double(r.metrics.brier, "%.4f") +
           " n=" + std::to_string(r.metrics.n_examples) +
           " incorrect=" + std::to_string(r.metrics.n_incorrect) + "\n";
    if (r.topic_summaries.empty()) {
      out += "topics: none retained\n";
    } else {
      out += "topics:\n";
      for (const TopicSummary& t : r.topic_summaries) {
        out += "- " + t.topic_label + " (" +
               format_double(t.size_fraction * 100.0, "%.1f") +
               "% of diagnoses): " + t.description + "\n";
      }
    }
    out += "patch: " + (r.patch_summary ? *r.patch_summary : std::string("none")) + "\n\n";
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::string render_controller_user(const PromptProgram& current, const Memory& memory) {
  std::string out = "Current PromptProgram (iteration " +
                    std::to_string(current.iteration_index) + "):\n";
  out += "[system_message]\n" + current.system_message + "\n";
  out += "[user_instruction]\n" + current.user_instruction + "\n";
  out += "\nHistory:\n" + render_memory(memory);
  return out;
}

llm::ToolDecl evaluate_prompt_tool_decl() {
  llm::ToolDecl decl;
  decl.name = "evaluate_prompt";
  decl.description =
      "Evaluates the CURRENT PromptProgram on the training split and returns an "
      "evaluation report: aggregate metrics plus recurring failure topics with "
      "representative examples. Call it exactly once per iteration, before any decision.";
  decl.parameters = json{{"type", "object"},
                         {"properties", json::object()},
                         {"additionalProperties", false}};
  return decl;
}

json decision_response_schema() {
  return json{{"type", "object"},
              {"properties",
               {{"decision", {{"type", "string"}}},
                {"rationale", {{"type", "string"}}},
                {"new_prompt",
                 {{"type", "object"},
                  {"properties",
                   {{"system_message", {{"type", "string"}}},
                    {"user_instruction", {{"type", "string"}}}}}}}}},
              {"required", json::array({"decision"})}};
}

std::string extractor_system() {
  return "You compare two versions of a PromptProgram and enumerate the atomic edits "
         "between them.\n"
         "An atomic edit is one added, removed, or modified instruction, stated as a "
         "short self-contained sentence.\n"
         "Output ONLY valid JSON: {\"atoms\": [\"...\"]}";
}

std::string render_extractor_user(const PromptProgram& before, const PromptProgram& after) {
  std::string out = "Version A (iteration " + std::to_string(before.iteration_index) + "):\n";
  out += "[system_message]\n" + before.system_message + "\n";
  out += "[user_instruction]\n" + before.user_instruction + "\n";
  out += "\nVersion B (iteration " + std::to_string(after.iteration_index) + "):\n";
  out += "[system_message]\n" + after.system_message + "\n";
  out += "[user_instruction]\n" + after.user_instruction + "\n";
  return out;
}

json extractor_response_schema() {
  return json{
      {"type", "object"},
      {"properties", {{"atoms", {{"type", "array"}, {"items", {{"type", "string"}}}}}}},
      {"required", json::array({"atoms"})}};
}

}  // namespace promptopt::templates
