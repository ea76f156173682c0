#pragma once
// Final-prompt selection: evaluates candidates on the dev split (cached),
// scores them with the scalar selection function, and picks the argmax
// with earliest-iteration tie-breaking.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "promptopt/domain.hpp"
#include "promptopt/evaluation.hpp"
#include "promptopt/gateway.hpp"

namespace promptopt::select {

enum class SelectionMode { task_only, confidence_aware };

std::string to_string(SelectionMode mode);
SelectionMode selection_mode_from_string(std::string_view s);

struct SelectionPolicy {
  SelectionMode mode = SelectionMode::task_only;
  double lambda_brier = 0.5;  // only read in confidence_aware mode
};

// task_only: task_score. confidence_aware: task_score - lambda * brier,
// all on the 0-1 scale.
double phi(const MetricSet& metrics, const SelectionPolicy& policy);

struct Candidate {
  PromptProgram prompt;
  MetricSet dev_metrics;
};

struct SelectionResult {
  PromptProgram chosen;
  std::map<int, MetricSet> dev_runs;    // iteration_index -> dev metrics
  std::map<int, double> phi_values;     // iteration_index -> phi
  std::optional<MetricSet> test_metrics;
};

// Argmax of phi; exact ties resolve to the smallest iteration_index.
// Throws `empty_candidates`.
SelectionResult select_final(const std::vector<Candidate>& candidates,
                             const SelectionPolicy& policy);

// Directory-backed metric cache keyed by (prompt content, split content).
// Identical prompt text at different iterations shares one entry.
class EvalCache {
 public:
  explicit EvalCache(std::filesystem::path dir);

  static std::string key_for(const PromptProgram& prompt,
                             const std::vector<Example>& split);

  std::optional<MetricSet> lookup(const std::string& key) const;
  void store(const std::string& key, const MetricSet& metrics) const;

 private:
  std::filesystem::path dir_;
};

// One dev evaluation per candidate, cache-first. Per-candidate failures
// are warned and skipped so one bad candidate cannot sink the rest.
std::map<int, MetricSet> evaluate_candidates_on_dev(
    llm::ChatClient& client, const std::vector<PromptProgram>& candidates,
    const std::vector<Example>& dev, const llm::ProviderConfig& target,
    const EvalCache* cache = nullptr, double temperature = 0.0);

}  // namespace promptopt::select
