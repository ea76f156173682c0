#include "promptopt/evaluation.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "promptopt/json_io.hpp"
#include "promptopt/templates.hpp"

namespace promptopt::evals {

using nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + std::string(s));
}

namespace {

bool is_article(std::string_view token) {
  return token == "a" || token == "an" || token == "the";
}

// lowercase -> strip punctuation -> drop articles -> collapse whitespace.
std::string normalize_qa(std::string_view text) {
  std::string stripped;
  stripped.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    stripped.push_back(static_cast<char>(std::tolower(c)));
  }
  std::string out;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    if (!is_article(token)) {
      if (!out.empty()) out.push_back(' ');
      out += token;
    }
    token.clear();
  };
  for (unsigned char c : stripped) {
    if (std::isspace(c)) {
      flush();
    } else {
      token.push_back(static_cast<char>(c));
    }
  }
  flush();
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool wrapped_by(std::string_view s, std::string_view open, std::string_view close) {
  return s.size() >= open.size() + close.size() && s.substr(0, open.size()) == open &&
         s.substr(s.size() - close.size()) == close;
}

std::string_view strip_math_wrappers(std::string_view s) {
  for (;;) {
    s = trim(s);
    if (wrapped_by(s, "\\(", "\\)") || wrapped_by(s, "\\[", "\\]")) {
      s.remove_prefix(2);
      s.remove_suffix(2);
      continue;
    }
    if (s.size() >= 4 && wrapped_by(s, "$$", "$$")) {
      s.remove_prefix(2);
      s.remove_suffix(2);
      continue;
    }
    if (s.size() >= 2 && (wrapped_by(s, "$", "$") || wrapped_by(s, "{", "}"))) {
      s.remove_prefix(1);
      s.remove_suffix(1);
      continue;
    }
    return s;
  }
}

std::string normalize_math(std::string_view text) {
  std::string_view core = strip_math_wrappers(text);
  std::string out;
  bool pending_space = false;
  for (unsigned char c : core) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view text, TaskKind kind) {
  switch (kind) {
    case TaskKind::qa_exact_match:
    case TaskKind::numeric_formula:
      return normalize_qa(text);
    case TaskKind::math:
      return normalize_math(text);
  }
  return normalize_qa(text);
}

bool try_parse_number(std::string_view text, double& out) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    if (c == '$' || c == ',' || c == '%' ||
        std::isspace(static_cast<unsigned char>(c))) {
      continue;
    }
    cleaned.push_back(c);
  }
  if (cleaned.empty()) return false;
  char* end = nullptr;
  const double value = std::strtod(cleaned.c_str(), &end);
  if (end != cleaned.c_str() + cleaned.size()) return false;
  if (!std::isfinite(value)) return false;
  out = value;
  return true;
}

namespace {

bool judge_numeric_formula(const std::string& gold, const std::string& answer) {
  double g = 0.0;
  double a = 0.0;
  if (try_parse_number(gold, g) && try_parse_number(answer, a)) {
    const double abs_err = std::fabs(a - g);
    if (abs_err <= 1e-9) return true;
    return std::fabs(g) > 0.0 && abs_err / std::fabs(g) <= 1e-4;
  }
  return !normalize_qa(answer).empty() && normalize_qa(answer) == normalize_qa(gold);
}

}  // namespace

JudgedExample judge(const Example& example, const TargetOutput& output) {
  if (example.example_id != output.example_id) {
    throw std::invalid_argument("judge: output " + output.example_id +
                                " does not belong to example " + example.example_id);
  }
  bool correct = false;
  switch (example.task_kind) {
    case TaskKind::qa_exact_match:
    case TaskKind::math: {
      const std::string gold = normalize_answer(example.gold, example.task_kind);
      const std::string pred = normalize_answer(output.answer, example.task_kind);
      correct = !pred.empty() && pred == gold;
      break;
    }
    case TaskKind::numeric_formula:
      correct = judge_numeric_formula(example.gold, output.answer);
      break;
  }
  return JudgedExample{example, output, correct, correct ? 1.0 : 0.0};
}

MetricSet compute_metrics(const std::vector<JudgedExample>& judged) {
  if (judged.empty()) {
    throw PipelineError("empty_input", "compute_metrics needs at least one judged example");
  }
  MetricSet m;
  double score_sum = 0.0;
  double confidence_sum = 0.0;
  double brier_sum = 0.0;
  for (const JudgedExample& je : judged) {
    score_sum += je.score;
    confidence_sum += je.output.confidence;
    const double indicator = je.correct ? 1.0 : 0.0;
    const double gap = je.output.confidence - indicator;
    brier_sum += gap * gap;
    if (!je.correct) ++m.n_incorrect;
  }
  const double n = static_cast<double>(judged.size());
  m.task_score = score_sum / n;
  m.mean_confidence = confidence_sum / n;
  m.brier = brier_sum / n;
  m.n_examples = static_cast<int>(judged.size());
  m.per_metric = {{"task_score", m.task_score},
                  {"mean_confidence", m.mean_confidence},
                  {"brier", m.brier}};
  return m;
}

double aggregate_across_tasks(const std::vector<double>& final_scores) {
  if (final_scores.empty()) {
    throw PipelineError("empty_input", "aggregate_across_tasks needs at least one score");
  }
  double sum = 0.0;
  for (double s : final_scores) sum += s;
  return sum / static_cast<double>(final_scores.size());
}

namespace {

TargetOutput failed_output(const std::string& example_id) {
  TargetOutput out;
  out.example_id = example_id;
  out.parse_status = ParseStatus::failed;
  return out;
}

std::optional<double> coerce_confidence(const json& value) {
  if (value.is_number()) return value.get<double>();
  if (value.is_string()) {
    double parsed = 0.0;
    if (try_parse_number(value.get<std::string>(), parsed)) return parsed;
  }
  return std::nullopt;
}

std::string coerce_answer(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  return value.dump();
}

TargetOutput parse_target_output(const Example& example, const llm::ChatResponse& response) {
  if (llm::is_error(response)) return failed_output(example.example_id);
  const auto parsed = llm::parse_structured(
      response, json{{"required", json::array({"answer", "confidence"})}});
  if (parsed.status == ParseStatus::failed) return failed_output(example.example_id);

  const auto confidence = coerce_confidence(parsed.value.at("confidence"));
  if (!confidence.has_value()) return failed_output(example.example_id);

  TargetOutput out;
  out.example_id = example.example_id;
  out.answer = coerce_answer(parsed.value.at("answer"));
  if (parsed.value.contains("reasoning") && parsed.value.at("reasoning").is_string()) {
    out.reasoning = parsed.value.at("reasoning").get<std::string>();
  } else if (example.task_kind == TaskKind::qa_exact_match &&
             parsed.value.contains("justification") &&
             parsed.value.at("justification").is_string()) {
    // QA seed contract names the field "justification".
    out.reasoning = parsed.value.at("justification").get<std::string>();
  }
  out.confidence = clamp_confidence(*confidence);
  out.confidence_clamped =
      !(std::isfinite(*confidence)) || out.confidence != *confidence;
  out.parse_status = parsed.status;
  return out;
}

}  // namespace

std::vector<TargetOutput> run_target(llm::ChatClient& client, const PromptProgram& prompt,
                                     const std::vector<Example>& examples,
                                     const llm::ProviderConfig& target, double temperature) {
  std::vector<llm::ChatRequest> requests;
  requests.reserve(examples.size());
  for (const Example& example : examples) {
    llm::ChatRequest req;
    req.messages = {llm::system_message(prompt.system_message),
                    llm::user_message(templates::render_target_user(prompt, example))};
    req.response_schema = templates::target_response_schema();
    req.temperature = temperature;
    requests.push_back(std::move(req));
  }

  const auto responses = client.evaluate_parallel(requests, target);
  std::vector<TargetOutput> outputs;
  outputs.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (llm::is_error(responses[i]) && responses[i].error_kind == "auth_error") {
      throw PipelineError("auth_error", responses[i].error_message);
    }
    outputs.push_back(parse_target_output(examples[i], responses[i]));
  }
  return outputs;
}

EvaluationRun evaluate_split(llm::ChatClient& client, const PromptProgram& prompt,
                             const std::vector<Example>& examples, Split split,
                             const llm::ProviderConfig& target, double temperature) {
  EvaluationRun run;
  run.prompt = prompt;
  run.split_name = split;
  const auto outputs = run_target(client, prompt, examples, target, temperature);
  run.judged.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    run.judged.push_back(judge(examples[i], outputs[i]));
  }
  run.metrics = compute_metrics(run.judged);
  return run;
}

void to_json(json& j, const JudgedExample& v) {
  j = json{{"example", v.example},
           {"output", v.output},
           {"correct", v.correct},
           {"score", v.score}};
}

void from_json(const json& j, JudgedExample& v) {
  j.at("example").get_to(v.example);
  j.at("output").get_to(v.output);
  j.at("correct").get_to(v.correct);
  j.at("score").get_to(v.score);
}

void to_json(json& j, const EvaluationRun& v) {
  j = json{{"prompt", v.prompt},
           {"split", to_string(v.split_name)},
           {"judged", v.judged},
           {"metrics", v.metrics}};
}

void from_json(const json& j, EvaluationRun& v) {
  j.at("prompt").get_to(v.prompt);
  v.split_name = split_from_string(j.at("split").get<std::string>());
  j.at("judged").get_to(v.judged);
  j.at("metrics").get_to(v.metrics);
}

}  // namespace promptopt::evals
