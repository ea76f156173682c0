#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptopt/evaluation.hpp"
#include "promptopt/gateway.hpp"
#include "promptopt/json_io.hpp"
#include "promptopt/mock_transport.hpp"
#include "support/world.hpp"

using namespace promptopt;
using namespace promptopt::evals;
using nlohmann::json;

namespace {

Example make_example(std::string id, std::string gold, TaskKind kind) {
  Example e;
  e.example_id = std::move(id);
  e.input = "input for " + e.example_id;
  e.gold = std::move(gold);
  e.task_kind = kind;
  return e;
}

TargetOutput answer_with(const std::string& id, std::string answer,
                         double confidence) {
  TargetOutput out;
  out.example_id = id;
  out.answer = std::move(answer);
  out.confidence = confidence;
  return out;
}

JudgedExample judged_stub(bool correct, double confidence) {
  JudgedExample je;
  je.example.example_id = "q";
  je.example.gold = "g";
  je.output.example_id = "q";
  je.output.confidence = confidence;
  je.correct = correct;
  je.score = correct ? 1.0 : 0.0;
  return je;
}

}  // namespace

TEST_CASE("qa normalization lowercases, strips punctuation and articles") {
  auto norm = [](std::string_view s) {
    return normalize_answer(s, TaskKind::qa_exact_match);
  };
  CHECK(norm("The Beatles") == "beatles");
  CHECK(norm("the beatles.") == "beatles");
  CHECK(norm("  An   Apple a Day ") == "apple day");
  CHECK(norm("U.S.A.") == "usa");
  CHECK(norm("\"Quoted answer!\"") == "quoted answer");
  CHECK(norm("There") == "there");  // only whole-token articles drop
  CHECK(norm("") == "");
}

TEST_CASE("math normalization strips wrappers but keeps punctuation") {
  auto norm = [](std::string_view s) {
    return normalize_answer(s, TaskKind::math);
  };
  CHECK(norm("\\(42\\)") == "42");
  CHECK(norm("\\[ 42 \\]") == "42");
  CHECK(norm("$42$") == "42");
  CHECK(norm("$$42$$") == "42");
  CHECK(norm("{42}") == "42");
  CHECK(norm("$\\(\\{-3\\}\\)$") != "");  // nested junk never crashes
  CHECK(norm("\\(-\\frac{1}{2}\\)") == "-\\frac{1}{2}");
  CHECK(norm("1,024") == "1,024");
  CHECK(norm("X = 7") == "x = 7");
}

TEST_CASE("try_parse_number tolerates currency and separators only") {
  double v = 0.0;
  CHECK(try_parse_number("42", v));
  CHECK(v == 42.0);
  CHECK(try_parse_number("$1,234.50", v));
  CHECK(v == 1234.5);
  CHECK(try_parse_number("12%", v));
  CHECK(v == 12.0);
  CHECK(try_parse_number(" -3.5e2 ", v));
  CHECK(v == -350.0);
  CHECK_FALSE(try_parse_number("", v));
  CHECK_FALSE(try_parse_number("abc", v));
  CHECK_FALSE(try_parse_number("12x", v));
  CHECK_FALSE(try_parse_number("nan", v));
  CHECK_FALSE(try_parse_number("inf", v));
}

TEST_CASE("judge: qa exact match after normalization") {
  auto e = make_example("q1", "The Beatles", TaskKind::qa_exact_match);
  CHECK(judge(e, answer_with("q1", "the beatles.", 0.9)).correct);
  CHECK(judge(e, answer_with("q1", "Beatles", 0.9)).correct);
  CHECK_FALSE(judge(e, answer_with("q1", "the rolling stones", 0.9)).correct);
  CHECK_FALSE(judge(e, answer_with("q1", "", 0.0)).correct);

  auto verdict = judge(e, answer_with("q1", "beatles", 0.4));
  CHECK(verdict.score == 1.0);
  CHECK(verdict.output.confidence == 0.4);

  CHECK_THROWS_AS(judge(e, answer_with("other", "beatles", 0.9)),
                  std::invalid_argument);
}

TEST_CASE("judge: numeric tolerance boundaries") {
  auto e = make_example("f1", "100", TaskKind::numeric_formula);
  CHECK(judge(e, answer_with("f1", "100.00001", 0.9)).correct);
  CHECK(judge(e, answer_with("f1", "100", 0.9)).correct);
  CHECK_FALSE(judge(e, answer_with("f1", "100.02", 0.9)).correct);

  // Relative error of exactly 1e-4 on exactly-representable operands.
  auto big = make_example("f2", "10000", TaskKind::numeric_formula);
  CHECK(judge(big, answer_with("f2", "10001", 0.9)).correct);
  CHECK_FALSE(judge(big, answer_with("f2", "10001.5", 0.9)).correct);

  // Near zero the absolute window takes over.
  auto zero = make_example("f3", "0", TaskKind::numeric_formula);
  CHECK(judge(zero, answer_with("f3", "0", 0.9)).correct);
  CHECK(judge(zero, answer_with("f3", "1e-10", 0.9)).correct);
  CHECK_FALSE(judge(zero, answer_with("f3", "1e-8", 0.9)).correct);

  // Formatting is forgiven where meaning is identical.
  auto money = make_example("f4", "1234.5", TaskKind::numeric_formula);
  CHECK(judge(money, answer_with("f4", "$1,234.50", 0.9)).correct);

  // Non-numeric sides fall back to normalized string match.
  auto words = make_example("f5", "not determinable", TaskKind::numeric_formula);
  CHECK(judge(words, answer_with("f5", "Not Determinable", 0.9)).correct);
  CHECK_FALSE(judge(words, answer_with("f5", "", 0.9)).correct);
}

TEST_CASE("judge: math final-answer matching through LaTeX wrappers") {
  auto e = make_example("m1", "\\frac{1}{2}", TaskKind::math);
  CHECK(judge(e, answer_with("m1", "$\\frac{1}{2}$", 0.9)).correct);
  CHECK(judge(e, answer_with("m1", "\\(\\frac{1}{2}\\)", 0.9)).correct);
  CHECK_FALSE(judge(e, answer_with("m1", "0.5", 0.9)).correct);

  auto plain = make_example("m2", "42", TaskKind::math);
  CHECK(judge(plain, answer_with("m2", "{42}", 0.9)).correct);
  CHECK_FALSE(judge(plain, answer_with("m2", "42.0", 0.9)).correct);
}

TEST_CASE("compute_metrics matches the hand-computed fixtures") {
  std::vector<JudgedExample> pair = {judged_stub(true, 0.8),
                                     judged_stub(false, 0.3)};
  MetricSet m = compute_metrics(pair);
  CHECK(m.task_score == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.mean_confidence == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(std::fabs(m.brier - 0.065) <= 1e-12);
  CHECK(m.n_examples == 2);
  CHECK(m.n_incorrect == 1);
  CHECK(m.per_metric.at("task_score") == m.task_score);
  CHECK(m.per_metric.at("mean_confidence") == m.mean_confidence);
  CHECK(m.per_metric.at("brier") == m.brier);

  std::vector<JudgedExample> perfect = {judged_stub(true, 1.0),
                                        judged_stub(true, 1.0),
                                        judged_stub(true, 1.0)};
  MetricSet mp = compute_metrics(perfect);
  CHECK(mp.task_score == 1.0);
  CHECK(mp.brier == 0.0);
  CHECK(mp.n_incorrect == 0);

  CHECK_THROWS_WITH_AS(compute_metrics({}),
                       "compute_metrics needs at least one judged example",
                       PipelineError);
  try {
    compute_metrics({});
  } catch (const PipelineError& e) {
    CHECK(e.kind() == "empty_input");
  }
}

TEST_CASE("constant 0.5 confidence pins brier at 0.25") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<JudgedExample> judged;
    const int n = static_cast<int>(rng() % 9) + 1;
    for (int i = 0; i < n; ++i) judged.push_back(judged_stub(rng() % 2 == 0, 0.5));
    CHECK(compute_metrics(judged).brier == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("brier is bounded and zero exactly at perfect calibration") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<JudgedExample> judged;
    const int n = static_cast<int>(rng() % 6) + 1;
    for (int i = 0; i < n; ++i) {
      const bool correct = rng() % 2 == 0;
      double confidence;
      switch (rng() % 3) {
        case 0: confidence = correct ? 1.0 : 0.0; break;       // calibrated
        case 1: confidence = correct ? 0.0 : 1.0; break;       // inverted
        default: confidence = static_cast<double>(rng() % 101) / 100.0;
      }
      judged.push_back(judged_stub(correct, confidence));
    }
    MetricSet m = compute_metrics(judged);
    CHECK(m.brier >= 0.0);
    CHECK(m.brier <= 1.0);
    const bool perfect = std::all_of(judged.begin(), judged.end(), [](const JudgedExample& je) {
      return je.output.confidence == (je.correct ? 1.0 : 0.0);
    });
    CHECK((m.brier == 0.0) == perfect);
  }
}

TEST_CASE("compute_metrics is permutation invariant and monotone in fixes") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<JudgedExample> judged;
    const int n = static_cast<int>(rng() % 8) + 2;
    for (int i = 0; i < n; ++i) {
      judged.push_back(judged_stub(rng() % 2 == 0,
                                   static_cast<double>(rng() % 101) / 100.0));
    }
    MetricSet before = compute_metrics(judged);

    std::vector<JudgedExample> shuffled = judged;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    MetricSet after = compute_metrics(shuffled);
    CHECK(after.task_score == doctest::Approx(before.task_score).epsilon(1e-12));
    CHECK(after.brier == doctest::Approx(before.brier).epsilon(1e-12));
    CHECK(after.n_incorrect == before.n_incorrect);

    auto wrong = std::find_if(judged.begin(), judged.end(),
                              [](const JudgedExample& je) { return !je.correct; });
    if (wrong != judged.end()) {
      wrong->correct = true;
      wrong->score = 1.0;
      wrong->output.confidence = 1.0;
      CHECK(compute_metrics(judged).task_score >= before.task_score);
    }
  }
}

TEST_CASE("aggregate_across_tasks is the plain mean on the 0-100 scale") {
  CHECK(std::fabs(aggregate_across_tasks({68.4, 70.5, 84.0}) - 74.3) <= 0.05);
  CHECK(std::fabs(aggregate_across_tasks({65.2, 66.2, 74.0}) - 68.5) <= 0.05);
  CHECK(aggregate_across_tasks({91.25}) == 91.25);
  try {
    aggregate_across_tasks({});
    FAIL("expected empty_input");
  } catch (const PipelineError& e) {
    CHECK(e.kind() == "empty_input");
  }
}

TEST_CASE("run_target parses, clamps, and degrades per example") {
  llm::MockTransport::reset_registry();
  auto dir = world::make_temp_dir("eval-target");
  json entries = json::array();
  auto add = [&](const std::string& needle, const std::string& reply) {
    entries.push_back(json{{"contains", json::array({needle})},
                           {"response", {{"text", reply}}}});
  };
  add("Question: input for q1",
      R"({"reasoning":"r","answer":"yes","confidence":0.7})");
  add("Question: input for q2",
      R"({"justification":"cited the passage","answer":"yes","confidence":1.3})");
  add("Question: input for q3", "I think the answer is 42.");
  world::write_json_file(dir / "script.json", json{{"entries", entries}});

  llm::ChatClient client;
  llm::ProviderConfig provider;
  provider.base_url = "mock://" + (dir / "script.json").string();

  std::vector<Example> examples = {
      make_example("q1", "yes", TaskKind::qa_exact_match),
      make_example("q2", "yes", TaskKind::qa_exact_match),
      make_example("q3", "42", TaskKind::qa_exact_match)};
  auto prompt = make_prompt_program("p0", 0, "Answer precisely.", "Answer:");
  auto outputs = run_target(client, prompt, examples, provider);
  REQUIRE(outputs.size() == 3);

  CHECK(outputs[0].answer == "yes");
  CHECK(outputs[0].confidence == 0.7);
  CHECK(outputs[0].reasoning == "r");
  CHECK(outputs[0].parse_status == ParseStatus::ok);
  CHECK_FALSE(outputs[0].confidence_clamped);

  CHECK(outputs[1].confidence == 1.0);
  CHECK(outputs[1].confidence_clamped);
  CHECK(outputs[1].reasoning == "cited the passage");

  CHECK(outputs[2].parse_status == ParseStatus::failed);
  CHECK(outputs[2].answer.empty());
  CHECK(outputs[2].confidence == 0.0);

  auto run = evaluate_split(client, prompt, examples, Split::train, provider);
  CHECK(run.metrics.n_examples == 3);
  CHECK(run.metrics.n_incorrect == 1);  // q3's parse failure judges incorrect
  CHECK(run.metrics.task_score == doctest::Approx(2.0 / 3.0));
  CHECK(run.split_name == Split::train);

  json j = run;
  auto back = j.get<EvaluationRun>();
  CHECK(back.judged.size() == run.judged.size());
  CHECK(back.metrics.brier == run.metrics.brier);
  CHECK(back.split_name == run.split_name);
  CHECK(back.judged[2].output.parse_status == ParseStatus::failed);
}

TEST_CASE("run_target aborts on auth errors instead of degrading") {
  llm::ChatClient client;
  llm::ProviderConfig live;
  live.base_url = "https://example.invalid/v1";
  live.api_key_env_var = "PROMPTOPT_EVAL_KEY_THAT_IS_NOT_SET";
  auto prompt = make_prompt_program("p0", 0, "s", "u");
  std::vector<Example> examples = {make_example("q1", "yes", TaskKind::qa_exact_match)};
  try {
    run_target(client, prompt, examples, live);
    FAIL("expected auth_error");
  } catch (const PipelineError& e) {
    CHECK(e.kind() == "auth_error");
  }
}

TEST_CASE("split names round-trip") {
  for (auto s : {Split::train, Split::dev, Split::test}) {
    CHECK(split_from_string(to_string(s)) == s);
  }
  CHECK_THROWS(split_from_string("validation"));
}
