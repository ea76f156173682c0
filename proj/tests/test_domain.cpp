#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "promptopt/dataset.hpp"
#include "promptopt/domain.hpp"
#include "promptopt/json_io.hpp"
#include "support/world.hpp"

using namespace promptopt;
using nlohmann::json;

namespace {

Example make_example(std::string id, std::string gold = "42") {
  Example e;
  e.example_id = std::move(id);
  e.input = "What is six times seven?";
  e.gold = std::move(gold);
  e.task_kind = TaskKind::qa_exact_match;
  return e;
}

// Deterministic generators for round-trip property tests. Strings draw
// from a pool that includes unicode, quotes, and newlines so the JSON
// escaping path is exercised.
std::string random_string(std::mt19937_64& rng) {
  static const std::vector<std::string> pool = {
      "",       "plain",          "two words",   "line\nbreak",
      "\"quoted\"", "tab\tseparated", "caf\xc3\xa9", "back\\slash",
      "{not json}", "  padded  ",
  };
  return pool[rng() % pool.size()];
}

double random_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() % 10001) / 10000.0;
}

PromptProgram random_prompt(std::mt19937_64& rng) {
  return make_prompt_program("p" + std::to_string(rng() % 9),
                             static_cast<int>(rng() % 9),
                             "sys " + random_string(rng),
                             "user " + random_string(rng));
}

MetricSet random_metrics(std::mt19937_64& rng) {
  MetricSet m;
  m.task_score = random_unit(rng);
  m.mean_confidence = random_unit(rng);
  m.brier = random_unit(rng);
  m.n_examples = static_cast<int>(rng() % 50) + 1;
  m.n_incorrect = static_cast<int>(rng() % (m.n_examples + 1));
  m.per_metric = {{"task_score", m.task_score},
                  {"mean_confidence", m.mean_confidence},
                  {"brier", m.brier}};
  return m;
}

FailureDiagnosis random_diagnosis(std::mt19937_64& rng) {
  FailureDiagnosis d;
  d.example_id = "q" + std::to_string(rng() % 20);
  d.diagnosis_index = static_cast<int>(rng() % 3) + 1;
  d.label = random_string(rng);
  d.definition = random_string(rng);
  d.why = random_string(rng);
  d.basis = random_string(rng);
  return d;
}

FailureTopic random_topic(std::mt19937_64& rng) {
  FailureTopic t;
  t.topic_label = "topic " + random_string(rng);
  t.description = random_string(rng);
  const int members = static_cast<int>(rng() % 4) + 1;
  for (int i = 0; i < members; ++i) {
    t.member_ids.push_back({"q" + std::to_string(rng() % 20),
                            static_cast<int>(rng() % 3) + 1});
  }
  const int reps = static_cast<int>(rng() % 3);
  for (int i = 0; i < reps; ++i) t.representatives.push_back(random_diagnosis(rng));
  t.size_fraction = random_unit(rng);
  return t;
}

bool metrics_equal(const MetricSet& a, const MetricSet& b) {
  return a.task_score == b.task_score && a.mean_confidence == b.mean_confidence &&
         a.brier == b.brier && a.n_examples == b.n_examples &&
         a.n_incorrect == b.n_incorrect && a.per_metric == b.per_metric;
}

bool prompts_equal(const PromptProgram& a, const PromptProgram& b) {
  return a.prompt_id == b.prompt_id && a.iteration_index == b.iteration_index &&
         a.system_message == b.system_message &&
         a.user_instruction == b.user_instruction &&
         a.length_chars == b.length_chars &&
         a.length_tokens_approx == b.length_tokens_approx;
}

}  // namespace

TEST_CASE("validate_dataset accepts well-formed examples") {
  std::vector<Example> ds = {make_example("q1"), make_example("q2"),
                             make_example("q3")};
  CHECK(validate_dataset(ds).empty());
}

TEST_CASE("validate_dataset flags duplicate example ids") {
  std::vector<Example> ds = {make_example("q1"), make_example("q1")};
  auto violations = validate_dataset(ds);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].kind == "duplicate_id");
  CHECK(violations[0].example_id == "q1");
}

TEST_CASE("validate_dataset flags empty gold") {
  std::vector<Example> ds = {make_example("q1", "")};
  auto violations = validate_dataset(ds);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].kind == "empty_gold");
  CHECK(violations[0].example_id == "q1");
}

TEST_CASE("validate_dataset reports every violation, not just the first") {
  std::vector<Example> ds = {make_example("q1"), make_example("q1"),
                             make_example("q2", "")};
  auto violations = validate_dataset(ds);
  CHECK(violations.size() == 2);
}

TEST_CASE("clamp_confidence clamps, zeroes non-finite, and is idempotent") {
  CHECK(clamp_confidence(0.5) == 0.5);
  CHECK(clamp_confidence(0.0) == 0.0);
  CHECK(clamp_confidence(1.0) == 1.0);
  CHECK(clamp_confidence(-0.3) == 0.0);
  CHECK(clamp_confidence(1.7) == 1.0);
  CHECK(clamp_confidence(std::numeric_limits<double>::quiet_NaN()) == 0.0);
  CHECK(clamp_confidence(std::numeric_limits<double>::infinity()) == 0.0);
  CHECK(clamp_confidence(-std::numeric_limits<double>::infinity()) == 0.0);

  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    double x = (random_unit(rng) - 0.5) * 6.0;
    double once = clamp_confidence(x);
    CHECK(once >= 0.0);
    CHECK(once <= 1.0);
    CHECK(clamp_confidence(once) == once);
  }
}

TEST_CASE("make_prompt_program derives lengths and rejects empty messages") {
  auto p = make_prompt_program("p0", 0, "Answer carefully.", "Say the answer.");
  CHECK(p.prompt_id == "p0");
  CHECK(p.iteration_index == 0);
  CHECK(p.length_chars ==
        static_cast<std::int64_t>(p.system_message.size() +
                                  p.user_instruction.size()));
  CHECK(p.length_tokens_approx ==
        whitespace_token_count(p.system_message) +
            whitespace_token_count(p.user_instruction));

  CHECK_THROWS_AS(make_prompt_program("p0", 0, "", "user"),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_prompt_program("p0", 0, "sys", ""),
                  std::invalid_argument);
}

TEST_CASE("whitespace_token_count splits on runs of whitespace") {
  CHECK(whitespace_token_count("") == 0);
  CHECK(whitespace_token_count("   ") == 0);
  CHECK(whitespace_token_count("one") == 1);
  CHECK(whitespace_token_count("one two three") == 3);
  CHECK(whitespace_token_count("  a\tb\nc  ") == 3);
  CHECK(whitespace_token_count("a  b") == 2);
}

TEST_CASE("enum string mappings round-trip and reject unknown tags") {
  for (auto kind : {TaskKind::qa_exact_match, TaskKind::math,
                    TaskKind::numeric_formula}) {
    CHECK(task_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS(task_kind_from_string("riddle"));

  for (auto status : {ParseStatus::ok, ParseStatus::repaired,
                      ParseStatus::failed}) {
    CHECK(parse_status_from_string(to_string(status)) == status);
  }
  CHECK_THROWS(parse_status_from_string("maybe"));

  for (auto kind : {DecisionKind::patch, DecisionKind::stop}) {
    CHECK(decision_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS(decision_kind_from_string("retry"));
}

TEST_CASE("memory_append keeps history ordered and rejects violations") {
  Memory m;
  CompressedReport r0;
  r0.iteration_index = 0;
  r0.metrics.task_score = 0.4;
  m = memory_append(std::move(m), r0);
  REQUIRE(m.reports.size() == 1);

  CompressedReport r1;
  r1.iteration_index = 1;
  r1.patch_summary = "tightened the answer format";
  m = memory_append(std::move(m), r1);
  REQUIRE(m.reports.size() == 2);
  CHECK(m.reports[0].iteration_index == 0);
  CHECK(m.reports[1].iteration_index == 1);

  CompressedReport dup;
  dup.iteration_index = 1;
  CHECK_THROWS_AS(memory_append(m, dup), std::invalid_argument);
  CompressedReport gap;
  gap.iteration_index = 3;
  CHECK_THROWS_AS(memory_append(m, gap), std::invalid_argument);
  // The first entry fixes the origin; later entries must stay contiguous.
  CompressedReport first_nonzero;
  first_nonzero.iteration_index = 2;
  Memory from_two = memory_append(Memory{}, first_nonzero);
  CHECK(from_two.reports[0].iteration_index == 2);
  CompressedReport skips;
  skips.iteration_index = 4;
  CHECK_THROWS_AS(memory_append(from_two, skips), std::invalid_argument);
}

TEST_CASE("memory_append grows length by one and preserves the prefix") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    Memory m;
    const int n = static_cast<int>(rng() % 8) + 1;
    for (int t = 0; t < n; ++t) {
      Memory before = m;
      CompressedReport r;
      r.iteration_index = t;
      r.metrics = random_metrics(rng);
      if (rng() % 2 == 0) r.patch_summary = random_string(rng);
      m = memory_append(std::move(m), r);
      REQUIRE(m.reports.size() == before.reports.size() + 1);
      for (size_t i = 0; i < before.reports.size(); ++i) {
        CHECK(m.reports[i].iteration_index ==
              before.reports[i].iteration_index);
      }
      CHECK(m.reports.back().iteration_index == t);
    }
  }
}

TEST_CASE("JSON round-trip preserves every domain type") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    PromptProgram p = random_prompt(rng);
    PromptProgram p2 = json(p).get<PromptProgram>();
    CHECK(prompts_equal(p, p2));

    Example e = make_example("q" + std::to_string(trial));
    e.input = random_string(rng) + " ?";
    e.gold = "g" + random_string(rng);
    e.task_kind = (trial % 3 == 0)   ? TaskKind::math
                  : (trial % 3 == 1) ? TaskKind::numeric_formula
                                     : TaskKind::qa_exact_match;
    if (trial % 2 == 0) {
      e.context = std::vector<ContextPassage>{
          {random_string(rng), random_string(rng)},
          {"B", random_string(rng)}};
    }
    CHECK(json(e).get<Example>() == e);

    TargetOutput out;
    out.example_id = e.example_id;
    out.reasoning = random_string(rng);
    out.answer = random_string(rng);
    out.confidence = random_unit(rng);
    out.parse_status = (trial % 2 == 0) ? ParseStatus::ok : ParseStatus::repaired;
    out.confidence_clamped = trial % 3 == 0;
    TargetOutput out2 = json(out).get<TargetOutput>();
    CHECK(out2.example_id == out.example_id);
    CHECK(out2.reasoning == out.reasoning);
    CHECK(out2.answer == out.answer);
    CHECK(out2.confidence == out.confidence);
    CHECK(out2.parse_status == out.parse_status);
    CHECK(out2.confidence_clamped == out.confidence_clamped);

    MetricSet m = random_metrics(rng);
    CHECK(metrics_equal(m, json(m).get<MetricSet>()));

    FailureTopic t = random_topic(rng);
    FailureTopic t2 = json(t).get<FailureTopic>();
    CHECK(t2.topic_label == t.topic_label);
    CHECK(t2.description == t.description);
    CHECK(t2.member_ids == t.member_ids);
    CHECK(t2.size_fraction == t.size_fraction);
    REQUIRE(t2.representatives.size() == t.representatives.size());
    for (size_t i = 0; i < t.representatives.size(); ++i) {
      CHECK(t2.representatives[i].example_id == t.representatives[i].example_id);
      CHECK(t2.representatives[i].diagnosis_index ==
            t.representatives[i].diagnosis_index);
      CHECK(t2.representatives[i].label == t.representatives[i].label);
      CHECK(t2.representatives[i].why == t.representatives[i].why);
    }

    DiagnosticReport report;
    report.iteration_index = static_cast<int>(rng() % 5);
    report.prompt = p;
    report.metrics = m;
    report.retained_topics = {t};
    DiagnosticReport report2 = json(report).get<DiagnosticReport>();
    CHECK(report2.iteration_index == report.iteration_index);
    CHECK(prompts_equal(report2.prompt, report.prompt));
    CHECK(metrics_equal(report2.metrics, report.metrics));
    REQUIRE(report2.retained_topics.size() == 1);
    CHECK(report2.retained_topics[0].topic_label == t.topic_label);

    CompressedReport cr;
    cr.iteration_index = report.iteration_index;
    cr.metrics = m;
    cr.topic_summaries = {{t.topic_label, t.description, t.size_fraction}};
    if (trial % 2 == 0) cr.patch_summary = random_string(rng);
    CompressedReport cr2 = json(cr).get<CompressedReport>();
    CHECK(cr2.iteration_index == cr.iteration_index);
    CHECK(metrics_equal(cr2.metrics, cr.metrics));
    REQUIRE(cr2.topic_summaries.size() == 1);
    CHECK(cr2.topic_summaries[0].topic_label == t.topic_label);
    CHECK(cr2.topic_summaries[0].size_fraction == t.size_fraction);
    CHECK(cr2.patch_summary == cr.patch_summary);

    Memory mem;
    mem = memory_append(std::move(mem), [&] {
      CompressedReport r = cr;
      r.iteration_index = 0;
      return r;
    }());
    Memory mem2 = json(mem).get<Memory>();
    REQUIRE(mem2.reports.size() == 1);
    CHECK(mem2.reports[0].patch_summary == mem.reports[0].patch_summary);

    PatchDecision dec;
    dec.kind = (trial % 2 == 0) ? DecisionKind::patch : DecisionKind::stop;
    if (dec.kind == DecisionKind::patch) dec.new_prompt = p;
    dec.rationale = random_string(rng);
    dec.tool_call_observed = true;
    PatchDecision dec2 = json(dec).get<PatchDecision>();
    CHECK(dec2.kind == dec.kind);
    CHECK(dec2.rationale == dec.rationale);
    CHECK(dec2.tool_call_observed == dec.tool_call_observed);
    CHECK(dec2.new_prompt.has_value() == dec.new_prompt.has_value());
    if (dec.new_prompt) CHECK(prompts_equal(*dec2.new_prompt, *dec.new_prompt));
  }
}

TEST_CASE("dataset files round-trip through JSONL with context pairs") {
  auto dir = world::make_temp_dir("domain-jsonl");
  std::vector<Example> ds = {make_example("q1"), make_example("q2")};
  ds[0].context = std::vector<ContextPassage>{{"Doc A", "First passage."},
                                              {"Doc B", "Second passage."}};
  save_dataset_jsonl(dir / "train.jsonl", ds);

  // External shape: one object per line, context as [title, passage] pairs.
  std::string raw = world::read_text(dir / "train.jsonl");
  auto first_line = raw.substr(0, raw.find('\n'));
  json parsed = json::parse(first_line);
  REQUIRE(parsed.at("context").is_array());
  CHECK(parsed.at("context")[0] == json::array({"Doc A", "First passage."}));
  CHECK(parsed.at("id") == "q1");
  CHECK(parsed.at("task_kind") == "qa_exact_match");

  auto loaded = load_dataset_jsonl(dir / "train.jsonl");
  CHECK(loaded == ds);
}

TEST_CASE("dataset loader names the file and line on malformed input") {
  auto dir = world::make_temp_dir("domain-jsonl-bad");
  world::write_text(dir / "bad.jsonl",
                        R"({"id":"q1","input":"x","gold":"1","task_kind":"math"})"
                        "\nnot json\n");
  try {
    load_dataset_jsonl(dir / "bad.jsonl");
    FAIL("expected config_error");
  } catch (const PipelineError& e) {
    CHECK(e.kind() == "config_error");
    CHECK(std::string(e.what()).find("bad.jsonl") != std::string::npos);
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }

  CHECK_THROWS_AS(load_dataset_jsonl(dir / "missing.jsonl"), PipelineError);
}
