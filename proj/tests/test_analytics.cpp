#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptopt/analytics.hpp"
#include "promptopt/mock_transport.hpp"
#include "support/world.hpp"

using namespace promptopt;
using namespace promptopt::analytics;
using nlohmann::json;

namespace {

llm::ProviderConfig script_provider(const std::filesystem::path& path) {
  llm::ProviderConfig p;
  p.base_url = "mock://" + path.string();
  p.retry_backoff_ms = 0;
  return p;
}

Transition transition(int index, std::vector<std::string> failures,
                      std::vector<std::string> patches, double d_task,
                      double d_brier) {
  Transition t;
  t.transition_index = index;
  t.failure_topics = std::move(failures);
  t.patch_topics = std::move(patches);
  t.delta_task_score = d_task;
  t.delta_brier = d_brier;
  return t;
}

// Exhaustive counting oracle, written independently of the library: walk
// every (failure, patch) pair over deduplicated per-transition labels.
std::map<std::pair<std::string, std::string>, double> oracle_alignment(
    const TransitionTable& table) {
  std::set<std::string> failures;
  std::set<std::string> patches;
  for (const auto& t : table.transitions) {
    failures.insert(t.failure_topics.begin(), t.failure_topics.end());
    patches.insert(t.patch_topics.begin(), t.patch_topics.end());
  }
  std::map<std::pair<std::string, std::string>, double> out;
  for (const auto& f : failures) {
    int active = 0;
    std::map<std::string, int> co;
    for (const auto& t : table.transitions) {
      std::set<std::string> fs(t.failure_topics.begin(), t.failure_topics.end());
      if (!fs.count(f)) continue;
      ++active;
      std::set<std::string> ps(t.patch_topics.begin(), t.patch_topics.end());
      for (const auto& p : ps) ++co[p];
    }
    for (const auto& p : patches) {
      out[{f, p}] = static_cast<double>(co.count(p) ? co[p] : 0) /
                    static_cast<double>(active);
    }
  }
  return out;
}

std::map<std::string, DeltaStats> oracle_delta(const TransitionTable& table,
                                               DeltaBy by) {
  std::map<std::string, DeltaStats> out;
  for (const auto& t : table.transitions) {
    std::set<std::string> labels;
    const auto& source =
        by == DeltaBy::failure_topic ? t.failure_topics : t.patch_topics;
    labels.insert(source.begin(), source.end());
    for (const auto& label : labels) {
      auto& s = out[label];
      s.mean_delta_task_score += t.delta_task_score;
      s.mean_delta_brier += t.delta_brier;
      ++s.n_transitions;
    }
  }
  for (auto& [label, s] : out) {
    s.mean_delta_task_score /= s.n_transitions;
    s.mean_delta_brier /= s.n_transitions;
  }
  return out;
}

TransitionTable random_table(std::mt19937_64& rng) {
  static const std::vector<std::string> failure_pool = {"f1", "f2", "f3", "f4",
                                                        "f5", "f6", "f7", "f8"};
  static const std::vector<std::string> patch_pool = {"p1", "p2", "p3", "p4",
                                                      "p5", "p6", "p7", "p8"};
  TransitionTable table;
  const int n = static_cast<int>(rng() % 50) + 1;
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.transition_index = i;
    const int nf = static_cast<int>(rng() % 4);
    for (int k = 0; k < nf; ++k) {
      // Duplicates on purpose: presence must stay binary.
      t.failure_topics.push_back(failure_pool[rng() % failure_pool.size()]);
      if (rng() % 4 == 0) t.failure_topics.push_back(t.failure_topics.back());
    }
    const int np = static_cast<int>(rng() % 4);
    for (int k = 0; k < np; ++k) {
      t.patch_topics.push_back(patch_pool[rng() % patch_pool.size()]);
    }
    t.delta_task_score = (static_cast<double>(rng() % 201) - 100.0) / 500.0;
    t.delta_brier = (static_cast<double>(rng() % 201) - 100.0) / 1000.0;
    table.transitions.push_back(std::move(t));
  }
  return table;
}

}  // namespace

TEST_CASE("line_diff_atoms reports changed lines, not common ones") {
  auto before = make_prompt_program("p0", 0, "Answer carefully.\nCite the passage.",
                                    "Reply with JSON.");
  auto appended = make_prompt_program(
      "p1", 1, "Answer carefully.\nCite the passage.",
      "Reply with JSON.\nDouble-check arithmetic before answering.");
  auto atoms = line_diff_atoms(before, appended);
  REQUIRE(atoms.size() == 1);
  CHECK(atoms[0] == "added: Double-check arithmetic before answering.");

  auto changed = make_prompt_program("p1", 1, "Answer carefully.\nQuote the passage.",
                                     "Reply with JSON.");
  auto pair = line_diff_atoms(before, changed);
  REQUIRE(pair.size() == 2);
  CHECK(std::count(pair.begin(), pair.end(), "removed: Cite the passage.") == 1);
  CHECK(std::count(pair.begin(), pair.end(), "added: Quote the passage.") == 1);

  CHECK(line_diff_atoms(before, before).empty());

  // The section markers separate system edits from instruction edits.
  auto moved = make_prompt_program("p1", 1, "Reply with JSON.", "Answer carefully.");
  CHECK_FALSE(line_diff_atoms(before, moved).empty());
}

TEST_CASE("extract_patch_atoms uses the extractor, falls back to the diff") {
  llm::MockTransport::reset_registry();
  auto dir = world::make_temp_dir("analytics-extract");
  auto p0 = make_prompt_program("p0", 0, "Answer.", "Reply.");
  auto p1 = make_prompt_program("p1", 1, "Answer.", "Reply.\nVerify sums.");

  SUBCASE("scripted atoms pass through with the transition index") {
    world::write_json_file(
        dir / "extractor.json",
        json{{"entries",
              json::array({json{
                  {"contains", json::array({"Version A (iteration 0):"})},
                  {"response",
                   {{"text", json{{"atoms", json::array({"added a verification step",
                                                         ""})}}.dump()}}}}})}});
    llm::ChatClient client;
    auto atoms =
        extract_patch_atoms(client, p0, p1, script_provider(dir / "extractor.json"));
    REQUIRE(atoms.size() == 1);  // empty atom strings are dropped
    CHECK(atoms[0].text == "added a verification step");
    CHECK(atoms[0].transition_index == 0);
    CHECK_FALSE(atoms[0].patch_topic.has_value());
  }

  SUBCASE("prose output falls back to line-diff atoms") {
    world::write_json_file(
        dir / "extractor.json",
        json{{"entries",
              json::array({json{{"contains", json::array({"Version A"})},
                                {"response", {{"text", "the differences are..."}}}}})}});
    llm::ChatClient client;
    auto atoms =
        extract_patch_atoms(client, p0, p1, script_provider(dir / "extractor.json"));
    auto expected = line_diff_atoms(p0, p1);
    REQUIRE(atoms.size() == expected.size());
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      CHECK(atoms[i].text == expected[i]);
      CHECK(atoms[i].transition_index == 0);
    }
  }

  SUBCASE("identical prompts are a caller error") {
    llm::ChatClient client;
    CHECK_THROWS_AS(
        extract_patch_atoms(client, p0, p0, script_provider(dir / "x.json")),
        std::invalid_argument);
  }
}

TEST_CASE("cluster_trace_topics maps every item to a label") {
  llm::MockTransport::reset_registry();
  auto dir = world::make_temp_dir("analytics-cluster");

  std::vector<std::string> items;
  json assignments = json::array();
  for (int i = 0; i < 20; ++i) {
    const bool format = i % 2 == 0;
    items.push_back((format ? "tightened output format rule " : "added reasoning step ") +
                    std::to_string(i));
    assignments.push_back(json{{"item", i + 1},
                               {"label", format ? "format edits" : "reasoning edits"}});
  }
  json topics = json::array({json{{"label", "format edits"}, {"description", "d"}},
                             json{{"label", "reasoning edits"}, {"description", "d"}}});
  world::write_json_file(
      dir / "clusterer.json",
      json{{"entries",
            json::array(
                {json{{"contains", json::array({"You group failure diagnoses"})},
                      {"response", {{"text", json{{"topics", topics}}.dump()}}}},
                 json{{"contains", json::array({"never invent new labels"})},
                      {"response",
                       {{"text", json{{"assignments", assignments}}.dump()}}}}})}});

  llm::ChatClient client;
  auto assignment = cluster_trace_topics(client, items, 2,
                                         script_provider(dir / "clusterer.json"), 7);
  REQUIRE(assignment.size() == 20);
  int format_count = 0;
  for (const auto& [index, label] : assignment) {
    if (label == "format edits") ++format_count;
    CHECK((label == "format edits" || label == "reasoning edits"));
  }
  CHECK(format_count == 10);
}

TEST_CASE("alignment_matrix matches the worked example") {
  TransitionTable table;
  table.transitions = {
      transition(0, {"F1"}, {"P1"}, 0.1, -0.01),
      transition(1, {"F1"}, {"P1", "P2"}, 0.1, -0.01),
      transition(2, {"F1"}, {"P2"}, 0.1, -0.01),
      transition(3, {"F1", "F2"}, {}, 0.1, -0.01),
  };
  auto matrix = alignment_matrix(table);
  REQUIRE(matrix.failure_labels == std::vector<std::string>{"F1", "F2"});
  REQUIRE(matrix.patch_labels == std::vector<std::string>{"P1", "P2"});
  CHECK(matrix.probability[0][0] == 0.5);   // P1 in 2 of 4 F1 transitions
  CHECK(matrix.probability[0][1] == 0.5);
  CHECK(matrix.probability[1][0] == 0.0);   // F2 co-occurs with nothing
  CHECK(matrix.probability[1][1] == 0.0);

  // Certainty: P3 present in every F3 transition.
  TransitionTable certain;
  certain.transitions = {transition(0, {"F3"}, {"P3"}, 0, 0),
                         transition(1, {"F3"}, {"P3", "P4"}, 0, 0)};
  auto m2 = alignment_matrix(certain);
  CHECK(m2.probability[0][0] == 1.0);

  // Duplicate labels inside one transition count once.
  TransitionTable dup;
  dup.transitions = {transition(0, {"F", "F"}, {"P", "P"}, 0, 0),
                     transition(1, {"F"}, {}, 0, 0)};
  auto m3 = alignment_matrix(dup);
  CHECK(m3.probability[0][0] == 0.5);
}

TEST_CASE("delta_association averages per active topic") {
  TransitionTable table;
  table.transitions = {transition(0, {"F1"}, {"P1"}, 0.02, -0.01),
                       transition(1, {"F1"}, {"P2"}, 0.04, 0.01),
                       transition(2, {"F2"}, {"P1"}, -0.10, 0.03)};

  auto by_failure = delta_association(table, DeltaBy::failure_topic);
  REQUIRE(by_failure.size() == 2);
  CHECK(by_failure.at("F1").mean_delta_task_score == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(by_failure.at("F1").mean_delta_brier == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(by_failure.at("F1").n_transitions == 2);
  CHECK(by_failure.at("F2").mean_delta_task_score == -0.10);
  CHECK(by_failure.at("F2").n_transitions == 1);

  auto by_patch = delta_association(table, DeltaBy::patch_topic);
  REQUIRE(by_patch.size() == 2);
  CHECK(by_patch.at("P1").mean_delta_task_score ==
        doctest::Approx(-0.04).epsilon(1e-12));
  CHECK(by_patch.at("P2").mean_delta_task_score == 0.04);

  // Topics with no supporting transitions simply do not appear.
  CHECK(by_failure.count("F3") == 0);
}

TEST_CASE("alignment and delta agree with a brute-force oracle") {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 100; ++trial) {
    TransitionTable table = random_table(rng);

    auto matrix = alignment_matrix(table);
    auto expected = oracle_alignment(table);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < matrix.failure_labels.size(); ++i) {
      for (std::size_t j = 0; j < matrix.patch_labels.size(); ++j) {
        const double p = matrix.probability[i][j];
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        CHECK(p == expected.at({matrix.failure_labels[i], matrix.patch_labels[j]}));
        ++checked;
      }
    }
    CHECK(checked == matrix.failure_labels.size() * matrix.patch_labels.size());

    for (auto by : {DeltaBy::failure_topic, DeltaBy::patch_topic}) {
      auto actual = delta_association(table, by);
      auto oracle = oracle_delta(table, by);
      REQUIRE(actual.size() == oracle.size());
      for (const auto& [label, stats] : actual) {
        CHECK(stats.mean_delta_task_score == oracle.at(label).mean_delta_task_score);
        CHECK(stats.mean_delta_brier == oracle.at(label).mean_delta_brier);
        CHECK(stats.n_transitions == oracle.at(label).n_transitions);
      }
    }
  }
}

TEST_CASE("run lengths and persistence averages") {
  CHECK(run_lengths({true, true, false, true}) == std::vector<int>{2, 1});
  CHECK(run_lengths({true, true, true, true}) == std::vector<int>{4});
  CHECK(run_lengths({false, false, false}).empty());
  CHECK(run_lengths({}).empty());
  CHECK(run_lengths({false, true}) == std::vector<int>{1});

  std::map<std::string, std::vector<bool>> activity = {
      {"alpha", {true, true, false, true}},
      {"beta", {true, true, true, true}},
      {"gamma", {false, false, false}},
  };
  auto averages = persistence_run_lengths(activity);
  REQUIRE(averages.size() == 2);
  CHECK(averages.at("alpha") == 1.5);
  CHECK(averages.at("beta") == 4.0);
  CHECK(averages.count("gamma") == 0);

  // Identity: total active iterations = sum of run lengths.
  std::mt19937_64 rng(67);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<bool> sequence;
    const int n = static_cast<int>(rng() % 12);
    int active = 0;
    for (int i = 0; i < n; ++i) {
      const bool on = rng() % 2 == 0;
      sequence.push_back(on);
      if (on) ++active;
    }
    int total = 0;
    for (int r : run_lengths(sequence)) {
      CHECK(r >= 1);
      total += r;
    }
    CHECK(total == active);
  }
}

TEST_CASE("csv quoting and emission") {
  CHECK(csv_quote("plain") == "plain");
  CHECK(csv_quote("has space") == "has space");
  CHECK(csv_quote("a,b") == "\"a,b\"");
  CHECK(csv_quote("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_quote("line\nbreak") == "\"line\nbreak\"");
  CHECK(csv_quote("") == "");

  AlignmentMatrix matrix;
  matrix.failure_labels = {"grounding, weak"};
  matrix.patch_labels = {"verify"};
  matrix.probability = {{0.5}};
  std::ostringstream alignment;
  write_alignment_csv(matrix, alignment);
  CHECK(alignment.str() ==
        "failure_topic,patch_topic,probability\n\"grounding, weak\",verify,0.5\n");

  std::map<std::string, DeltaStats> deltas = {{"verify", {0.03, -0.005, 2}}};
  std::ostringstream delta;
  write_delta_csv(deltas, "patch_topic", delta);
  CHECK(delta.str() ==
        "patch_topic,mean_delta_task_score,mean_delta_brier,n_transitions\n"
        "verify,0.03,-0.005,2\n");

  std::ostringstream persistence;
  write_persistence_csv({{"alpha", 1.5}}, persistence);
  const std::string text = persistence.str();
  CHECK(text.find("alpha,1.5\n") != std::string::npos);
  CHECK(text.substr(0, text.find('\n')).find("topic") != std::string::npos);
}
