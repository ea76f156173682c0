#include "promptopt/analytics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "promptopt/diagnostics.hpp"
#include "promptopt/templates.hpp"

namespace promptopt::analytics {

using nlohmann::json;

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(line);
      line.clear();
    } else {
      line.push_back(c);
    }
  }
  if (!line.empty()) lines.push_back(line);
  return lines;
}

std::string render_prompt_text(const PromptProgram& p) {
  return "[system_message]\n" + p.system_message + "\n[user_instruction]\n" +
         p.user_instruction;
}

}  // namespace

std::vector<std::string> line_diff_atoms(const PromptProgram& before,
                                         const PromptProgram& after) {
  const auto a = split_lines(render_prompt_text(before));
  const auto b = split_lines(render_prompt_text(after));

  // Classic LCS table; prompt texts are small.
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1
                               : std::max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }

  std::vector<std::string> atoms;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n && j < m) {
    if (a[i] == b[j]) {
      ++i;
      ++j;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      atoms.push_back("removed: " + a[i++]);
    } else {
      atoms.push_back("added: " + b[j++]);
    }
  }
  while (i < n) atoms.push_back("removed: " + a[i++]);
  while (j < m) atoms.push_back("added: " + b[j++]);
  return atoms;
}

std::vector<PromptPatchAtom> extract_patch_atoms(llm::ChatClient& client,
                                                 const PromptProgram& p_t,
                                                 const PromptProgram& p_next,
                                                 const llm::ProviderConfig& extractor) {
  if (p_t.system_message == p_next.system_message &&
      p_t.user_instruction == p_next.user_instruction) {
    throw std::invalid_argument("extract_patch_atoms: prompts are identical");
  }

  std::vector<std::string> texts;
  llm::ChatRequest req;
  req.messages = {llm::system_message(templates::extractor_system()),
                  llm::user_message(templates::render_extractor_user(p_t, p_next))};
  req.response_schema = templates::extractor_response_schema();

  const auto response = client.complete(req, extractor);
  const auto parsed =
      llm::parse_structured(response, json{{"required", json::array({"atoms"})}});
  if (parsed.status != ParseStatus::failed && parsed.value.at("atoms").is_array()) {
    for (const json& atom : parsed.value.at("atoms")) {
      if (atom.is_string() && !atom.get<std::string>().empty()) {
        texts.push_back(atom.get<std::string>());
      }
    }
  }
  if (texts.empty()) {
    texts = line_diff_atoms(p_t, p_next);  // differing prompts guarantee atoms
  }

  std::vector<PromptPatchAtom> atoms;
  atoms.reserve(texts.size());
  for (std::string& text : texts) {
    atoms.push_back(PromptPatchAtom{p_t.iteration_index, std::move(text), std::nullopt});
  }
  return atoms;
}

std::map<int, std::string> cluster_trace_topics(llm::ChatClient& client,
                                                const std::vector<std::string>& items,
                                                int k, const llm::ProviderConfig& clusterer,
                                                std::uint64_t seed) {
  diag::ClusteringConfig cfg;
  cfg.k_topics = k;
  cfg.sample_for_induction = std::max(40, k);
  const auto topics = diag::cluster_texts(client, items, cfg, clusterer, seed);
  std::map<int, std::string> assignment;
  for (const diag::TextTopic& topic : topics) {
    for (int index : topic.member_indices) assignment[index] = topic.label;
  }
  return assignment;
}

namespace {

std::set<std::string> unique_labels(const std::vector<std::string>& labels) {
  return {labels.begin(), labels.end()};
}

}  // namespace

AlignmentMatrix alignment_matrix(const TransitionTable& table) {
  std::set<std::string> failure_set;
  std::set<std::string> patch_set;
  for (const Transition& t : table.transitions) {
    for (const std::string& f : t.failure_topics) failure_set.insert(f);
    for (const std::string& p : t.patch_topics) patch_set.insert(p);
  }

  AlignmentMatrix matrix;
  matrix.failure_labels.assign(failure_set.begin(), failure_set.end());
  matrix.patch_labels.assign(patch_set.begin(), patch_set.end());
  matrix.probability.assign(matrix.failure_labels.size(),
                            std::vector<double>(matrix.patch_labels.size(), 0.0));

  for (std::size_t i = 0; i < matrix.failure_labels.size(); ++i) {
    const std::string& failure = matrix.failure_labels[i];
    int active = 0;
    std::vector<int> co_count(matrix.patch_labels.size(), 0);
    for (const Transition& t : table.transitions) {
      const auto failures = unique_labels(t.failure_topics);
      if (!failures.count(failure)) continue;
      ++active;
      const auto patches = unique_labels(t.patch_topics);
      for (std::size_t j = 0; j < matrix.patch_labels.size(); ++j) {
        if (patches.count(matrix.patch_labels[j])) ++co_count[j];
      }
    }
    // Rows exist only for active failure topics, so active >= 1 here.
    for (std::size_t j = 0; j < matrix.patch_labels.size(); ++j) {
      matrix.probability[i][j] =
          static_cast<double>(co_count[j]) / static_cast<double>(active);
    }
  }
  return matrix;
}

std::map<std::string, DeltaStats> delta_association(const TransitionTable& table,
                                                    DeltaBy by) {
  std::map<std::string, DeltaStats> sums;
  for (const Transition& t : table.transitions) {
    const auto labels =
        unique_labels(by == DeltaBy::failure_topic ? t.failure_topics : t.patch_topics);
    for (const std::string& label : labels) {
      DeltaStats& s = sums[label];
      s.mean_delta_task_score += t.delta_task_score;
      s.mean_delta_brier += t.delta_brier;
      ++s.n_transitions;
    }
  }
  for (auto& [label, s] : sums) {
    s.mean_delta_task_score /= static_cast<double>(s.n_transitions);
    s.mean_delta_brier /= static_cast<double>(s.n_transitions);
  }
  return sums;
}

std::vector<int> run_lengths(const std::vector<bool>& activity) {
  std::vector<int> runs;
  int current = 0;
  for (bool active : activity) {
    if (active) {
      ++current;
    } else if (current > 0) {
      runs.push_back(current);
      current = 0;
    }
  }
  if (current > 0) runs.push_back(current);
  return runs;
}

std::map<std::string, double> persistence_run_lengths(
    const std::map<std::string, std::vector<bool>>& activity) {
  std::map<std::string, double> averages;
  for (const auto& [topic, sequence] : activity) {
    const auto runs = run_lengths(sequence);
    if (runs.empty()) continue;
    double sum = 0.0;
    for (int r : runs) sum += r;
    averages[topic] = sum / static_cast<double>(runs.size());
  }
  return averages;
}

std::string csv_quote(const std::string& field) {
  const bool needs_quoting =
      field.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs_quoting) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += "\"\"";
    else quoted.push_back(c);
  }
  quoted.push_back('"');
  return quoted;
}

namespace {

std::string csv_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void write_alignment_csv(const AlignmentMatrix& matrix, std::ostream& out) {
  out << "failure_topic,patch_topic,probability\n";
  for (std::size_t i = 0; i < matrix.failure_labels.size(); ++i) {
    for (std::size_t j = 0; j < matrix.patch_labels.size(); ++j) {
      out << csv_quote(matrix.failure_labels[i]) << ','
          << csv_quote(matrix.patch_labels[j]) << ','
          << csv_number(matrix.probability[i][j]) << '\n';
    }
  }
}

void write_delta_csv(const std::map<std::string, DeltaStats>& deltas,
                     const std::string& topic_column, std::ostream& out) {
  out << csv_quote(topic_column) << ",mean_delta_task_score,mean_delta_brier,n_transitions\n";
  for (const auto& [label, s] : deltas) {
    out << csv_quote(label) << ',' << csv_number(s.mean_delta_task_score) << ','
        << csv_number(s.mean_delta_brier) << ',' << s.n_transitions << '\n';
  }
}

void write_persistence_csv(const std::map<std::string, double>& persistence,
                           std::ostream& out) {
  out << "failure_topic,average_run_length\n";
  for (const auto& [label, value] : persistence) {
    out << csv_quote(label) << ',' << csv_number(value) << '\n';
  }
}

}  // namespace promptopt::analytics
