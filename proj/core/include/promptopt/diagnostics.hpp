#pragma once
// The diagnostic side of the loop: failure detection, per-failure critic
// calls, two-pass LLM clustering into recurring failure topics, retention
// filtering, and report assembly / rendering / compression.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "promptopt/domain.hpp"
#include "promptopt/evaluation.hpp"
#include "promptopt/gateway.hpp"
#include "promptopt/templates.hpp"

namespace promptopt::diag {

struct ClusteringConfig {
  int k_topics = 10;                 // the K; 20 suits larger pools
  double retention_fraction = 0.10;  // topics must strictly exceed this share
  int sample_for_induction = 40;     // pass-1 sample size, >= k_topics
  int assignment_batch_size = 20;    // pass-2 items per call
};

struct CritiqueConfig {
  // Cap of three diagnoses per failed example; extra critic output is dropped.
  int max_diagnoses_per_failure = 3;
  llm::ProviderConfig critic_provider;
  templates::TaskTemplate critic_template = templates::TaskTemplate::qa;
  double temperature = 0.3;
};

// Judged examples with correct = false, original order preserved.
std::vector<evals::JudgedExample> detect_failures(const evals::EvaluationRun& run);

// One critic call per failure. Schema-violating or failed critiques
// degrade to zero diagnoses for that example (warning on stderr), never
// an abort. diagnosis_index is 1-based per example.
std::vector<FailureDiagnosis> critique_failures(
    llm::ChatClient& client, const std::vector<evals::JudgedExample>& failures,
    const CritiqueConfig& cfg);

// Generic two-pass clustering over text items, reused for both failure
// diagnoses and prompt-patch atoms. Pass 1 samples
// min(|items|, sample_for_induction) items (seeded shuffle) and asks the
// clustering model for k_topics labeled topics; pass 2 assigns every item
// to one topic label in batches. Unknown labels and unanswered items fall
// back to the first topic with a warning so the result stays a partition.
// Throws `induction_failed` when pass 1 yields no parseable topics after
// one retry, `empty_input` on an empty item list.
struct TextTopic {
  std::string label;
  std::string description;
  std::vector<int> member_indices;  // ascending item indices
};

std::vector<TextTopic> cluster_texts(llm::ChatClient& client,
                                     const std::vector<std::string>& items,
                                     const ClusteringConfig& cfg,
                                     const llm::ProviderConfig& clusterer,
                                     std::uint64_t seed, double temperature = 0.0);

// Clusters the diagnosis pool (item text = "label: why"). Every pool
// member lands in exactly one topic; empty topics are dropped;
// size_fraction sums to 1. Representatives are the at most 3
// earliest-assigned members.
std::vector<FailureTopic> cluster_diagnoses(llm::ChatClient& client,
                                            const std::vector<FailureDiagnosis>& pool,
                                            const ClusteringConfig& cfg,
                                            const llm::ProviderConfig& clusterer,
                                            std::uint64_t seed);

// Keeps topics with size_fraction strictly greater than
// retention_fraction, sorted descending by size_fraction (stable on ties).
std::vector<FailureTopic> retain_topics(std::vector<FailureTopic> topics,
                                        const ClusteringConfig& cfg);

// Assembles the report; metrics are copied from the run untouched.
DiagnosticReport build_report(const PromptProgram& prompt, const evals::EvaluationRun& run,
                              std::vector<FailureTopic> retained);

// Bounded text projection for the optimizer: header, metrics block, one
// block per retained topic in stored order. When over budget the
// representative why texts shrink first, then representatives drop, then
// the tail is cut hard. confidence_aware toggles the calibration lines.
std::string render_report(const DiagnosticReport& report, int char_budget,
                          bool confidence_aware);

// Memory projection: drops representatives and judged outputs, keeps
// metrics + (label, description, size_fraction) + the patch summary.
CompressedReport compress_for_memory(const DiagnosticReport& report,
                                     std::optional<std::string> patch_summary);

}  // namespace promptopt::diag
