#include "promptopt/json_io.hpp"

namespace promptopt {

using nlohmann::json;

void to_json(json& j, const PromptProgram& p) {
  j = json{{"prompt_id", p.prompt_id},
           {"iteration_index", p.iteration_index},
           {"system_message", p.system_message},
           {"user_instruction", p.user_instruction},
           {"length_chars", p.length_chars},
           {"length_tokens_approx", p.length_tokens_approx}};
}

void from_json(const json& j, PromptProgram& p) {
  j.at("prompt_id").get_to(p.prompt_id);
  j.at("iteration_index").get_to(p.iteration_index);
  j.at("system_message").get_to(p.system_message);
  j.at("user_instruction").get_to(p.user_instruction);
  j.at("length_chars").get_to(p.length_chars);
  j.at("length_tokens_approx").get_to(p.length_tokens_approx);
}

void to_json(json& j, const ContextPassage& c) {
  j = json::array({c.title, c.passage});
}

void from_json(const json& j, ContextPassage& c) {
  c.title = j.at(0).get<std::string>();
  c.passage = j.at(1).get<std::string>();
}

void to_json(json& j, const Example& e) {
  j = json{{"id", e.example_id},
           {"input", e.input},
           {"context", nullptr},
           {"gold", e.gold},
           {"task_kind", to_string(e.task_kind)}};
  if (e.context.has_value()) j["context"] = *e.context;
}

void from_json(const json& j, Example& e) {
  j.at("id").get_to(e.example_id);
  j.at("input").get_to(e.input);
  if (j.contains("context") && !j.at("context").is_null()) {
    e.context = j.at("context").get<std::vector<ContextPassage>>();
  } else {
    e.context.reset();
  }
  j.at("gold").get_to(e.gold);
  e.task_kind = task_kind_from_string(j.at("task_kind").get<std::string>());
}

void to_json(json& j, const TargetOutput& t) {
  j = json{{"example_id", t.example_id},
           {"reasoning", t.reasoning},
           {"answer", t.answer},
           {"confidence", t.confidence},
           {"parse_status", to_string(t.parse_status)},
           {"confidence_clamped", t.confidence_clamped}};
}

void from_json(const json& j, TargetOutput& t) {
  j.at("example_id").get_to(t.example_id);
  j.at("reasoning").get_to(t.reasoning);
  j.at("answer").get_to(t.answer);
  j.at("confidence").get_to(t.confidence);
  t.parse_status = parse_status_from_string(j.at("parse_status").get<std::string>());
  t.confidence_clamped = j.value("confidence_clamped", false);
}

void to_json(json& j, const MetricSet& m) {
  j = json{{"task_score", m.task_score},
           {"per_metric", m.per_metric},
           {"mean_confidence", m.mean_confidence},
           {"brier", m.brier},
           {"n_examples", m.n_examples},
           {"n_incorrect", m.n_incorrect}};
}

void from_json(const json& j, MetricSet& m) {
  j.at("task_score").get_to(m.task_score);
  j.at("per_metric").get_to(m.per_metric);
  j.at("mean_confidence").get_to(m.mean_confidence);
  j.at("brier").get_to(m.brier);
  j.at("n_examples").get_to(m.n_examples);
  j.at("n_incorrect").get_to(m.n_incorrect);
}

void to_json(json& j, const FailureDiagnosis& d) {
  j = json{{"example_id", d.example_id},
           {"diagnosis_index", d.diagnosis_index},
           {"label", d.label},
           {"definition", d.definition},
           {"why", d.why},
           {"basis", d.basis}};
}

void from_json(const json& j, FailureDiagnosis& d) {
  j.at("example_id").get_to(d.example_id);
  j.at("diagnosis_index").get_to(d.diagnosis_index);
  j.at("label").get_to(d.label);
  j.at("definition").get_to(d.definition);
  j.at("why").get_to(d.why);
  j.at("basis").get_to(d.basis);
}

void to_json(json& j, const DiagnosisRef& r) {
  j = json{{"example_id", r.example_id}, {"diagnosis_index", r.diagnosis_index}};
}

void from_json(const json& j, DiagnosisRef& r) {
  j.at("example_id").get_to(r.example_id);
  j.at("diagnosis_index").get_to(r.diagnosis_index);
}

void to_json(json& j, const FailureTopic& t) {
  j = json{{"topic_label", t.topic_label},
           {"description", t.description},
           {"member_ids", t.member_ids},
           {"representatives", t.representatives},
           {"size_fraction", t.size_fraction}};
}

void from_json(const json& j, FailureTopic& t) {
  j.at("topic_label").get_to(t.topic_label);
  j.at("description").get_to(t.description);
  j.at("member_ids").get_to(t.member_ids);
  j.at("representatives").get_to(t.representatives);
  j.at("size_fraction").get_to(t.size_fraction);
}

void to_json(json& j, const DiagnosticReport& r) {
  j = json{{"iteration_index", r.iteration_index},
           {"prompt", r.prompt},
           {"metrics", r.metrics},
           {"retained_topics", r.retained_topics}};
}

void from_json(const json& j, DiagnosticReport& r) {
  j.at("iteration_index").get_to(r.iteration_index);
  j.at("prompt").get_to(r.prompt);
  j.at("metrics").get_to(r.metrics);
  j.at("retained_topics").get_to(r.retained_topics);
}

void to_json(json& j, const TopicSummary& s) {
  j = json{{"topic_label", s.topic_label},
           {"description", s.description},
           {"size_fraction", s.size_fraction}};
}

void from_json(const json& j, TopicSummary& s) {
  j.at("topic_label").get_to(s.topic_label);
  j.at("description").get_to(s.description);
  j.at("size_fraction").get_to(s.size_fraction);
}

void to_json(json& j, const CompressedReport& r) {
  j = json{{"iteration_index", r.iteration_index},
           {"metrics", r.metrics},
           {"topic_summaries", r.topic_summaries},
           {"patch_summary", nullptr}};
  if (r.patch_summary.has_value()) j["patch_summary"] = *r.patch_summary;
}

void from_json(const json& j, CompressedReport& r) {
  j.at("iteration_index").get_to(r.iteration_index);
  j.at("metrics").get_to(r.metrics);
  j.at("topic_summaries").get_to(r.topic_summaries);
  if (j.contains("patch_summary") && !j.at("patch_summary").is_null()) {
    r.patch_summary = j.at("patch_summary").get<std::string>();
  } else {
    r.patch_summary.reset();
  }
}

void to_json(json& j, const Memory& m) {
  j = json{{"reports", m.reports}};
}

void from_json(const json& j, Memory& m) {
  j.at("reports").get_to(m.reports);
}

void to_json(json& j, const PatchDecision& d) {
  j = json{{"kind", to_string(d.kind)},
           {"new_prompt", nullptr},
           {"rationale", d.rationale},
           {"tool_call_observed", d.tool_call_observed}};
  if (d.new_prompt.has_value()) j["new_prompt"] = *d.new_prompt;
}

void from_json(const json& j, PatchDecision& d) {
  d.kind = decision_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("new_prompt") && !j.at("new_prompt").is_null()) {
    d.new_prompt = j.at("new_prompt").get<PromptProgram>();
  } else {
    d.new_prompt.reset();
  }
  j.at("rationale").get_to(d.rationale);
  j.at("tool_call_observed").get_to(d.tool_call_observed);
}

}  // namespace promptopt
