#include "promptopt/diagnostics.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <unordered_map>

namespace promptopt::diag {

using nlohmann::json;

std::vector<evals::JudgedExample> detect_failures(const evals::EvaluationRun& run) {
  std::vector<evals::JudgedExample> failures;
  for (const evals::JudgedExample& je : run.judged) {
    if (!je.correct) failures.push_back(je);
  }
  return failures;
}

std::vector<FailureDiagnosis> critique_failures(
    llm::ChatClient& client, const std::vector<evals::JudgedExample>& failures,
    const CritiqueConfig& cfg) {
  std::vector<llm::ChatRequest> requests;
  requests.reserve(failures.size());
  for (const evals::JudgedExample& failure : failures) {
    llm::ChatRequest req;
    req.messages = {
        llm::system_message(templates::critic_system(cfg.critic_template)),
        llm::user_message(templates::render_critic_user(failure.example, failure.output))};
    req.response_schema = templates::critic_response_schema();
    req.temperature = cfg.temperature;
    requests.push_back(std::move(req));
  }

  const auto responses = client.evaluate_parallel(requests, cfg.critic_provider);
  std::vector<FailureDiagnosis> pool;
  for (std::size_t i = 0; i < failures.size(); ++i) {
    const std::string& example_id = failures[i].example.example_id;
    const auto parsed = llm::parse_structured(
        responses[i], json{{"required", json::array({"failure_modes"})}});
    if (parsed.status == ParseStatus::failed ||
        !parsed.value.at("failure_modes").is_array()) {
      std::fprintf(stderr, "warning: critic output unusable for %s, 0 diagnoses\n",
                   example_id.c_str());
      continue;
    }
    int index = 0;
    for (const json& mode : parsed.value.at("failure_modes")) {
      if (index >= cfg.max_diagnoses_per_failure) {
        std::fprintf(stderr, "warning: critic exceeded diagnosis cap for %s, extras dropped\n",
                     example_id.c_str());
        break;
      }
      const std::string label = mode.value("label", "");
      if (label.empty()) {
        std::fprintf(stderr, "warning: empty diagnosis label for %s dropped\n",
                     example_id.c_str());
        continue;
      }
      FailureDiagnosis d;
      d.example_id = example_id;
      d.diagnosis_index = ++index;
      d.label = label;
      d.definition = mode.value("definition", "");
      d.why = mode.value("why", "");
      d.basis = mode.value("basis", "");
      pool.push_back(std::move(d));
    }
  }
  return pool;
}

namespace {

// Partial Fisher-Yates: first `count` positions of a seeded shuffle.
std::vector<int> sample_indices(int total, int count, std::uint64_t seed) {
  std::vector<int> indices(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) indices[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    const auto remaining = static_cast<std::uint64_t>(total - i);
    const int j = i + static_cast<int>(rng() % remaining);
    std::swap(indices[static_cast<std::size_t>(i)], indices[static_cast<std::size_t>(j)]);
  }
  indices.resize(static_cast<std::size_t>(count));
  return indices;
}

std::vector<std::pair<std::string, std::string>> induce_topics(
    llm::ChatClient& client, const std::vector<std::string>& items,
    const ClusteringConfig& cfg, const llm::ProviderConfig& clusterer, std::uint64_t seed,
    double temperature) {
  const int sample_size =
      std::min(static_cast<int>(items.size()), std::max(cfg.sample_for_induction, cfg.k_topics));
  std::vector<std::string> sampled;
  sampled.reserve(static_cast<std::size_t>(sample_size));
  for (int idx : sample_indices(static_cast<int>(items.size()), sample_size, seed)) {
    sampled.push_back(items[static_cast<std::size_t>(idx)]);
  }

  llm::ChatRequest req;
  req.messages = {llm::system_message(templates::induction_system()),
                  llm::user_message(templates::render_induction_user(sampled, cfg.k_topics))};
  req.response_schema = templates::induction_response_schema();
  req.temperature = temperature;

  // One retry before induction is declared failed.
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto response = client.complete(req, clusterer);
    const auto parsed = llm::parse_structured(
        response, json{{"required", json::array({"topics"})}});
    if (parsed.status == ParseStatus::failed || !parsed.value.at("topics").is_array()) {
      continue;
    }
    std::vector<std::pair<std::string, std::string>> topics;
    for (const json& jt : parsed.value.at("topics")) {
      const std::string label = jt.value("label", "");
      if (label.empty()) continue;
      topics.emplace_back(label, jt.value("description", ""));
      if (static_cast<int>(topics.size()) == cfg.k_topics) break;
    }
    if (!topics.empty()) return topics;
  }
  throw PipelineError("induction_failed", "topic induction produced no parseable topics");
}

}  // namespace

std::vector<TextTopic> cluster_texts(llm::ChatClient& client,
                                     const std::vector<std::string>& items,
                                     const ClusteringConfig& cfg,
                                     const llm::ProviderConfig& clusterer, std::uint64_t seed,
                                     double temperature) {
  if (items.empty()) {
    throw PipelineError("empty_input", "cluster_texts needs at least one item");
  }

  const auto induced = induce_topics(client, items, cfg, clusterer, seed, temperature);
  std::unordered_map<std::string, int> topic_by_label;
  std::vector<TextTopic> topics(induced.size());
  for (std::size_t k = 0; k < induced.size(); ++k) {
    topics[k].label = induced[k].first;
    topics[k].description = induced[k].second;
    topic_by_label.emplace(induced[k].first, static_cast<int>(k));
  }

  // Pass 2: batched assignment, item numbering is 1-based and global so
  // responses stay unambiguous across batches.
  const int batch_size = std::max(1, cfg.assignment_batch_size);
  std::vector<int> assignment(items.size(), -1);
  for (std::size_t start = 0; start < items.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(items.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::pair<int, std::string>> numbered;
    for (std::size_t i = start; i < end; ++i) {
      numbered.emplace_back(static_cast<int>(i) + 1, items[i]);
    }
    llm::ChatRequest req;
    req.messages = {
        llm::system_message(templates::assignment_system()),
        llm::user_message(templates::render_assignment_user(induced, numbered))};
    req.response_schema = templates::assignment_response_schema();
    req.temperature = temperature;

    json assignments;
    for (int attempt = 0; attempt < 2; ++attempt) {
      const auto response = client.complete(req, clusterer);
      const auto parsed = llm::parse_structured(
          response, json{{"required", json::array({"assignments"})}});
      if (parsed.status != ParseStatus::failed && parsed.value.at("assignments").is_array()) {
        assignments = parsed.value.at("assignments");
        break;
      }
    }
    if (assignments.is_null()) {
      std::fprintf(stderr, "warning: assignment batch %zu unusable, items fall back to '%s'\n",
                   start / static_cast<std::size_t>(batch_size), topics[0].label.c_str());
      continue;  // unassigned items default below
    }
    for (const json& a : assignments) {
      if (!a.is_object() || !a.contains("item")) continue;
      const int number = a.at("item").get<int>();
      const std::size_t index = static_cast<std::size_t>(number - 1);
      if (index < start || index >= end) continue;
      const std::string label = a.value("label", "");
      const auto it = topic_by_label.find(label);
      if (it == topic_by_label.end()) {
        std::fprintf(stderr, "warning: unknown topic label '%s', item %d falls back to '%s'\n",
                     label.c_str(), number, topics[0].label.c_str());
        assignment[index] = 0;
      } else {
        assignment[index] = it->second;
      }
    }
  }

  for (std::size_t i = 0; i < items.size(); ++i) {
    if (assignment[i] < 0) assignment[i] = 0;
    topics[static_cast<std::size_t>(assignment[i])].member_indices.push_back(
        static_cast<int>(i));
  }

  std::vector<TextTopic> non_empty;
  for (TextTopic& t : topics) {
    if (!t.member_indices.empty()) non_empty.push_back(std::move(t));
  }
  return non_empty;
}

std::vector<FailureTopic> cluster_diagnoses(llm::ChatClient& client,
                                            const std::vector<FailureDiagnosis>& pool,
                                            const ClusteringConfig& cfg,
                                            const llm::ProviderConfig& clusterer,
                                            std::uint64_t seed) {
  if (pool.empty()) {
    throw PipelineError("empty_input", "cluster_diagnoses needs a non-empty pool");
  }
  std::vector<std::string> items;
  items.reserve(pool.size());
  for (const FailureDiagnosis& d : pool) {
    items.push_back(d.label + ": " + d.why);
  }

  const auto text_topics = cluster_texts(client, items, cfg, clusterer, seed);
  std::vector<FailureTopic> topics;
  topics.reserve(text_topics.size());
  for (const TextTopic& tt : text_topics) {
    FailureTopic topic;
    topic.topic_label = tt.label;
    topic.description = tt.description;
    for (int index : tt.member_indices) {
      const FailureDiagnosis& d = pool[static_cast<std::size_t>(index)];
      topic.member_ids.push_back(DiagnosisRef{d.example_id, d.diagnosis_index});
      if (topic.representatives.size() < 3) topic.representatives.push_back(d);
    }
    topic.size_fraction =
        static_cast<double>(tt.member_indices.size()) / static_cast<double>(pool.size());
    topics.push_back(std::move(topic));
  }
  return topics;
}

std::vector<FailureTopic> retain_topics(std::vector<FailureTopic> topics,
                                        const ClusteringConfig& cfg) {
  std::vector<FailureTopic> retained;
  for (FailureTopic& t : topics) {
    if (t.size_fraction > cfg.retention_fraction) retained.push_back(std::move(t));
  }
  std::stable_sort(retained.begin(), retained.end(),
                   [](const FailureTopic& a, const FailureTopic& b) {
                     return a.size_fraction > b.size_fraction;
                   });
  return retained;
}

DiagnosticReport build_report(const PromptProgram& prompt, const evals::EvaluationRun& run,
                              std::vector<FailureTopic> retained) {
  DiagnosticReport report;
  report.iteration_index = prompt.iteration_index;
  report.prompt = prompt;
  report.metrics = run.metrics;
  report.retained_topics = std::move(retained);
  return report;
}

namespace {

std::string format4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string truncate_why(const std::string& why, std::size_t cap) {
  if (cap == 0) return "";
  if (why.size() <= cap) return why;
  return why.substr(0, cap) + "...";
}

// why_cap: SIZE_MAX = full text, 0 = drop representatives entirely.
std::string render_report_at(const DiagnosticReport& report, bool confidence_aware,
                             std::size_t why_cap) {
  std::string out = "Evaluation report for iteration " +
                    std::to_string(report.iteration_index) + "\n";
  out += "prompt: " + report.prompt.prompt_id +
         " (chars " + std::to_string(report.prompt.length_chars) + ", tokens approx " +
         std::to_string(report.prompt.length_tokens_approx) + ")\n";
  out += "metrics:\n";
  out += "- task_score: " + format4(report.metrics.task_score) + "\n";
  if (confidence_aware) {
    out += "- mean_confidence: " + format4(report.metrics.mean_confidence) + "\n";
    out += "- brier: " + format4(report.metrics.brier) + "\n";
  }
  out += "- examples: " + std::to_string(report.metrics.n_examples) +
         ", incorrect: " + std::to_string(report.metrics.n_incorrect) + "\n";
  if (report.retained_topics.empty()) {
    out += "Recurring failure topics: none retained\n";
    return out;
  }
  out += "Recurring failure topics (" + std::to_string(report.retained_topics.size()) +
         " retained):\n";
  int rank = 1;
  for (const FailureTopic& t : report.retained_topics) {
    out += std::to_string(rank++) + ". " + t.topic_label + " (" +
           format4(t.size_fraction * 100.0) + "% of diagnoses, " +
           std::to_string(t.member_ids.size()) + " members)\n";
    out += "   " + t.description + "\n";
    if (why_cap > 0 && !t.representatives.empty()) {
      out += "   representatives:\n";
      for (const FailureDiagnosis& d : t.representatives) {
        out += "   - [" + d.example_id + "] " + truncate_why(d.why, why_cap) + "\n";
      }
    }
  }
  return out;
}

}  // namespace

std::string render_report(const DiagnosticReport& report, int char_budget,
                          bool confidence_aware) {
  const auto budget = static_cast<std::size_t>(std::max(char_budget, 0));
  std::string out = render_report_at(report, confidence_aware, SIZE_MAX);
  if (out.size() <= budget) return out;
  out = render_report_at(report, confidence_aware, 80);
  if (out.size() <= budget) return out;
  out = render_report_at(report, confidence_aware, 0);
  if (out.size() <= budget) return out;
  return out.substr(0, budget);
}

CompressedReport compress_for_memory(const DiagnosticReport& report,
                                     std::optional<std::string> patch_summary) {
  CompressedReport compressed;
  compressed.iteration_index = report.iteration_index;
  compressed.metrics = report.metrics;
  for (const FailureTopic& t : report.retained_topics) {
    compressed.topic_summaries.push_back(
        TopicSummary{t.topic_label, t.description, t.size_fraction});
  }
  compressed.patch_summary = std::move(patch_summary);
  return compressed;
}

}  // namespace promptopt::diag
