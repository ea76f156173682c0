#pragma once
// Versioned prompt-text assets: built-in seed prompts, critic prompts per
// task family, the controller prompt, and the clustering / diff-extraction
// prompts, plus the renderers that inject runtime data into them. All
// callers go through this module so prompt wording changes in one place
// and is stamped with kTemplateVersion in run manifests.

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptopt/domain.hpp"
#include "promptopt/gateway.hpp"

namespace promptopt::templates {

inline constexpr const char* kTemplateVersion = "v1";

// Built-in template families. qa expects context passages and elicits a
// "justification" field; math and formula elicit "reasoning".
enum class TaskTemplate { qa, math, formula };

std::string to_string(TaskTemplate t);
TaskTemplate template_from_string(std::string_view s);
TaskTemplate template_for_kind(TaskKind kind);

// Seed PromptProgram ("p0", iteration 0) for a template family.
PromptProgram seed_prompt(TaskTemplate t);

// Target-model side.
std::string render_target_user(const PromptProgram& prompt, const Example& example);
nlohmann::json target_response_schema();

// Critic side. The system text is the per-family critic persona; the user
// text carries one failed trace.
std::string critic_system(TaskTemplate t);
std::string render_critic_user(const Example& example, const TargetOutput& output);
nlohmann::json critic_response_schema();

// Clustering, pass 1 (topic induction) and pass 2 (batch assignment).
// Assignment items carry stable pool indices so batches stay unambiguous.
std::string induction_system();
std::string render_induction_user(const std::vector<std::string>& sampled_texts, int k_topics);
nlohmann::json induction_response_schema();
std::string assignment_system();
std::string render_assignment_user(
    const std::vector<std::pair<std::string, std::string>>& topics,
    const std::vector<std::pair<int, std::string>>& numbered_items);
nlohmann::json assignment_response_schema();

// Controller (optimizer) side. confidence_aware toggles the calibration
// objective line.
std::string controller_system(bool confidence_aware);
std::string render_controller_user(const PromptProgram& current, const Memory& memory);
std::string render_memory(const Memory& memory);
llm::ToolDecl evaluate_prompt_tool_decl();
nlohmann::json decision_response_schema();

// Prompt-diff atom extraction.
std::string extractor_system();
std::string render_extractor_user(const PromptProgram& before, const PromptProgram& after);
nlohmann::json extractor_response_schema();

}  // namespace promptopt::templates
