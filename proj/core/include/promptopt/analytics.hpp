#pragma once
// Post-hoc trace analysis: atomic prompt-diff extraction, patch/failure
// topic tables, failure-to-patch alignment probabilities, next-iteration
// delta associations, and failure-persistence run lengths, plus the CSV
// writers the analyze command emits.

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "promptopt/domain.hpp"
#include "promptopt/gateway.hpp"

namespace promptopt::analytics {

struct PromptPatchAtom {
  int transition_index = 0;  // the t -> t+1 edge, taken from the earlier prompt
  std::string text;
  std::optional<std::string> patch_topic;
};

// One optimization edge. Topic presence is treated as binary: labels are
// deduplicated within a transition before counting.
struct Transition {
  int transition_index = 0;
  std::vector<std::string> failure_topics;  // retained topic labels at iteration t
  std::vector<std::string> patch_topics;    // patch-atom topic labels on this edge
  double delta_task_score = 0.0;            // train metrics, t -> t+1
  double delta_brier = 0.0;
};

struct TransitionTable {
  std::vector<Transition> transitions;
};

// Line-level diff atoms over the rendered prompt text (LCS-based):
// "removed: <line>" / "added: <line>" per changed line.
std::vector<std::string> line_diff_atoms(const PromptProgram& before,
                                         const PromptProgram& after);

// LLM enumeration of atomic edits between consecutive prompts, falling
// back to line_diff_atoms whenever the extractor output is unusable.
// Throws std::invalid_argument when the prompt contents are identical.
std::vector<PromptPatchAtom> extract_patch_atoms(llm::ChatClient& client,
                                                 const PromptProgram& p_t,
                                                 const PromptProgram& p_next,
                                                 const llm::ProviderConfig& extractor);

// Clusters free text items (patch atoms or pooled diagnoses) with the
// same two-pass machinery as the diagnostics module and returns
// item index -> topic label.
std::map<int, std::string> cluster_trace_topics(llm::ChatClient& client,
                                                const std::vector<std::string>& items,
                                                int k, const llm::ProviderConfig& clusterer,
                                                std::uint64_t seed);

// P(patch topic | failure topic): fraction of transitions containing the
// patch topic among those containing the failure topic. Rows exist only
// for failure topics active in at least one transition; labels sorted.
struct AlignmentMatrix {
  std::vector<std::string> failure_labels;       // rows
  std::vector<std::string> patch_labels;         // columns
  std::vector<std::vector<double>> probability;  // [row][column]
};

AlignmentMatrix alignment_matrix(const TransitionTable& table);

enum class DeltaBy { failure_topic, patch_topic };

struct DeltaStats {
  double mean_delta_task_score = 0.0;
  double mean_delta_brier = 0.0;
  int n_transitions = 0;
};

// Unweighted means of the delta metrics over the transitions where each
// topic is present. Topics with zero supporting transitions are omitted.
std::map<std::string, DeltaStats> delta_association(const TransitionTable& table, DeltaBy by);

// Lengths of maximal runs of consecutive true values, in order.
std::vector<int> run_lengths(const std::vector<bool>& activity);

// Average maximal run length per topic; never-active topics are omitted.
std::map<std::string, double> persistence_run_lengths(
    const std::map<std::string, std::vector<bool>>& activity);

// CSV emission (UTF-8, header row, dot-decimal).
std::string csv_quote(const std::string& field);
void write_alignment_csv(const AlignmentMatrix& matrix, std::ostream& out);
void write_delta_csv(const std::map<std::string, DeltaStats>& deltas,
                     const std::string& topic_column, std::ostream& out);
void write_persistence_csv(const std::map<std::string, double>& persistence,
                           std::ostream& out);

}  // namespace promptopt::analytics
