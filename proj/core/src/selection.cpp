#include "promptopt/selection.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "promptopt/json_io.hpp"

namespace promptopt::select {

using nlohmann::json;

std::string to_string(SelectionMode mode) {
  return mode == SelectionMode::task_only ? "task_only" : "confidence_aware";
}

SelectionMode selection_mode_from_string(std::string_view s) {
  if (s == "task_only") return SelectionMode::task_only;
  if (s == "confidence_aware") return SelectionMode::confidence_aware;
  throw std::invalid_argument("unknown selection mode: " + std::string(s));
}

double phi(const MetricSet& metrics, const SelectionPolicy& policy) {
  if (policy.mode == SelectionMode::task_only) return metrics.task_score;
  return metrics.task_score - policy.lambda_brier * metrics.brier;
}

SelectionResult select_final(const std::vector<Candidate>& candidates,
                             const SelectionPolicy& policy) {
  if (candidates.empty()) {
    throw PipelineError("empty_candidates", "selection needs at least one candidate");
  }
  std::vector<Candidate> ordered = candidates;
  std::sort(ordered.begin(), ordered.end(), [](const Candidate& a, const Candidate& b) {
    return a.prompt.iteration_index < b.prompt.iteration_index;
  });

  SelectionResult result;
  const Candidate* best = nullptr;
  double best_phi = 0.0;
  for (const Candidate& c : ordered) {
    const double value = phi(c.dev_metrics, policy);
    result.dev_runs[c.prompt.iteration_index] = c.dev_metrics;
    result.phi_values[c.prompt.iteration_index] = value;
    // Strictly-greater keeps the earliest iteration on exact ties.
    if (best == nullptr || value > best_phi) {
      best = &c;
      best_phi = value;
    }
  }
  result.chosen = best->prompt;
  return result;
}

EvalCache::EvalCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string EvalCache::key_for(const PromptProgram& prompt,
                               const std::vector<Example>& split) {
  const std::string prompt_fp = llm::fingerprint_messages(
      {{"system", prompt.system_message}, {"user", prompt.user_instruction}});
  json split_content = json::array();
  for (const Example& e : split) split_content.push_back(e);
  const std::string split_fp =
      llm::fingerprint_messages({{"split", split_content.dump()}});
  return prompt_fp + "_" + split_fp;
}

std::optional<MetricSet> EvalCache::lookup(const std::string& key) const {
  const auto path = dir_ / (key + ".json");
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  try {
    return j.get<MetricSet>();
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

void EvalCache::store(const std::string& key, const MetricSet& metrics) const {
  const auto path = dir_ / (key + ".json");
  const auto tmp = dir_ / (key + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    out << json(metrics).dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

std::map<int, MetricSet> evaluate_candidates_on_dev(
    llm::ChatClient& client, const std::vector<PromptProgram>& candidates,
    const std::vector<Example>& dev, const llm::ProviderConfig& target,
    const EvalCache* cache, double temperature) {
  std::map<int, MetricSet> results;
  for (const PromptProgram& prompt : candidates) {
    const std::string key = cache ? EvalCache::key_for(prompt, dev) : std::string();
    if (cache) {
      if (auto hit = cache->lookup(key)) {
        results[prompt.iteration_index] = *hit;
        continue;
      }
    }
    try {
      const auto run =
          evals::evaluate_split(client, prompt, dev, evals::Split::dev, target, temperature);
      results[prompt.iteration_index] = run.metrics;
      if (cache) cache->store(key, run.metrics);
    } catch (const PipelineError& e) {
      std::fprintf(stderr, "warning: dev evaluation failed for %s (%s): %s\n",
                   prompt.prompt_id.c_str(), e.kind().c_str(), e.what());
    }
  }
  return results;
}

}  // namespace promptopt::select
