// Microbenchmarks for the hot paths: answer normalization and judging,
// metric computation, report rendering, artifact hashing, prompt diffs,
// and the alignment matrix. Run with --benchmark_filter=<regex>.
#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptopt/analytics.hpp"
#include "promptopt/diagnostics.hpp"
#include "promptopt/evaluation.hpp"
#include "promptopt/json_io.hpp"
#include "promptopt/runstore.hpp"

namespace {

using namespace promptopt;

evals::JudgedExample make_judged(int i, bool correct) {
  evals::JudgedExample je;
  je.example.example_id = "e" + std::to_string(i);
  je.example.input = "What is the capital of country number " + std::to_string(i) + "?";
  je.example.gold = "City " + std::to_string(i);
  je.example.task_kind = TaskKind::qa_exact_match;
  je.output.example_id = je.example.example_id;
  je.output.answer = correct ? je.example.gold : "somewhere else";
  je.output.reasoning = "recalled from the passage";
  je.output.confidence = correct ? 0.9 : 0.6;
  je.correct = correct;
  je.score = correct ? 1.0 : 0.0;
  return je;
}

std::vector<evals::JudgedExample> make_judged_set(int n) {
  std::vector<evals::JudgedExample> set;
  set.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) set.push_back(make_judged(i, i % 3 != 0));
  return set;
}

void bm_normalize_qa(benchmark::State& state) {
  const std::string text =
      "  The Answer, according to THE documents, is:  \"Jean-Baptiste\" (1802). ";
  for (auto _ : state) {
    benchmark::DoNotOptimize(evals::normalize_answer(text, TaskKind::qa_exact_match));
  }
}
BENCHMARK(bm_normalize_qa);

void bm_normalize_math(benchmark::State& state) {
  const std::string text = R"(\[ x = \frac{1}{2} + 3,141.59 \])";
  for (auto _ : state) {
    benchmark::DoNotOptimize(evals::normalize_answer(text, TaskKind::math));
  }
}
BENCHMARK(bm_normalize_math);

void bm_judge_numeric(benchmark::State& state) {
  Example ex;
  ex.example_id = "n1";
  ex.input = "total revenue?";
  ex.gold = "$1,234.50";
  ex.task_kind = TaskKind::numeric_formula;
  TargetOutput out;
  out.example_id = "n1";
  out.answer = "1234.5";
  out.confidence = 0.9;
  for (auto _ : state) {
    benchmark::DoNotOptimize(evals::judge(ex, out));
  }
}
BENCHMARK(bm_judge_numeric);

void bm_compute_metrics(benchmark::State& state) {
  const auto set = make_judged_set(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(evals::compute_metrics(set));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_compute_metrics)->Range(8, 4096)->Complexity(benchmark::oN);

void bm_render_report(benchmark::State& state) {
  const auto prompt = make_prompt_program(
      "p3", 3, "Answer using only the provided passages. Cite the source line.",
      "Reply with a JSON object holding reasoning, answer, and confidence.");
  evals::EvaluationRun run;
  run.prompt = prompt;
  run.judged = make_judged_set(64);
  run.metrics = evals::compute_metrics(run.judged);

  std::vector<FailureTopic> retained;
  for (int k = 0; k < 4; ++k) {
    FailureTopic t;
    t.topic_label = "failure mode " + std::to_string(k);
    t.description = "the answer drifts away from the passage in style " +
                    std::to_string(k);
    t.size_fraction = 0.4 - 0.05 * k;
    for (int r = 0; r < 3; ++r) {
      FailureDiagnosis d;
      d.example_id = "e" + std::to_string(k * 3 + r);
      d.diagnosis_index = r + 1;
      d.label = t.topic_label;
      d.definition = t.description;
      d.why = "the model paraphrased the passage and lost the exact figure "
              "needed for the final answer";
      d.basis = "reasoning";
      t.member_ids.push_back(DiagnosisRef{d.example_id, d.diagnosis_index});
      t.representatives.push_back(d);
    }
    retained.push_back(std::move(t));
  }
  const auto report = diag::build_report(prompt, run, retained);
  const int budget = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(diag::render_report(report, budget, true));
  }
}
BENCHMARK(bm_render_report)->Arg(8000)->Arg(1200)->Arg(300);

void bm_hash_artifact(benchmark::State& state) {
  evals::EvaluationRun run;
  run.prompt = make_prompt_program("p0", 0, "Answer plainly.", "Reply with JSON.");
  run.judged = make_judged_set(static_cast<int>(state.range(0)));
  run.metrics = evals::compute_metrics(run.judged);
  const nlohmann::json artifact = run;
  for (auto _ : state) {
    benchmark::DoNotOptimize(store::hash_artifact(artifact));
  }
}
BENCHMARK(bm_hash_artifact)->Range(8, 512);

void bm_line_diff_atoms(benchmark::State& state) {
  std::string before_sys;
  std::string after_sys;
  for (int i = 0; i < 40; ++i) {
    const std::string line = "Rule " + std::to_string(i) + ": keep answers grounded.\n";
    before_sys += line;
    after_sys += (i % 7 == 0) ? "Rule " + std::to_string(i) + ": cite the passage.\n"
                              : line;
  }
  const auto before = make_prompt_program("p1", 1, before_sys, "Reply with JSON.");
  const auto after = make_prompt_program("p2", 2, after_sys, "Reply with JSON.");
  for (auto _ : state) {
    benchmark::DoNotOptimize(analytics::line_diff_atoms(before, after));
  }
}
BENCHMARK(bm_line_diff_atoms);

void bm_alignment_matrix(benchmark::State& state) {
  std::mt19937_64 rng(7);
  analytics::TransitionTable table;
  const int n = static_cast<int>(state.range(0));
  for (int i = 0; i < n; ++i) {
    analytics::Transition t;
    t.transition_index = i;
    for (int k = 0; k < 3; ++k) {
      t.failure_topics.push_back("failure " + std::to_string(rng() % 12));
      t.patch_topics.push_back("patch " + std::to_string(rng() % 12));
    }
    t.delta_task_score = 0.01;
    t.delta_brier = -0.01;
    table.transitions.push_back(std::move(t));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(analytics::alignment_matrix(table));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_alignment_matrix)->Range(8, 1024)->Complexity();

}  // namespace

BENCHMARK_MAIN();
