#include "promptopt/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <utility>

#include "promptopt/analytics.hpp"
#include "promptopt/dataset.hpp"
#include "promptopt/evaluation.hpp"
#include "promptopt/json_io.hpp"
#include "promptopt/optimizer.hpp"
#include "promptopt/runstore.hpp"
#include "promptopt/selection.hpp"
#include "promptopt/templates.hpp"

namespace promptopt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int exit_code_for(const PipelineError& e) {
  return e.kind() == "config_error" ? kExitConfig : kExitAbort;
}

// The read-side commands recover providers and policy from a manifest's
// config snapshot instead of requiring the original config file.
struct SnapshotView {
  fs::path train_path;
  fs::path dev_path;
  fs::path test_path;
  llm::ProviderConfig target;
  llm::ProviderConfig clusterer;
  select::SelectionPolicy policy;
  double target_temperature = 0.0;
  std::uint64_t random_seed = 0;
};

SnapshotView view_snapshot(const json& snap) {
  SnapshotView v;
  try {
    const json& datasets = snap.at("datasets");
    v.train_path = datasets.at("train").get<std::string>();
    v.dev_path = datasets.at("dev").get<std::string>();
    v.test_path = datasets.at("test").get<std::string>();
    const json& providers = snap.at("providers");
    v.target = providers.at("target").get<llm::ProviderConfig>();
    v.clusterer = providers.at("clusterer").get<llm::ProviderConfig>();
    const json& selection = snap.at("selection");
    v.policy.mode = select::selection_mode_from_string(selection.at("mode").get<std::string>());
    v.policy.lambda_brier = selection.at("lambda_brier").get<double>();
    v.target_temperature = snap.at("temperatures").at("target").get<double>();
    v.random_seed = snap.at("random_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw PipelineError("config_error",
                        std::string("manifest config snapshot: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw PipelineError("config_error",
                        std::string("manifest config snapshot: ") + e.what());
  }
  return v;
}

std::vector<Example> load_validated_dataset(const fs::path& path) {
  auto examples = load_dataset_jsonl(path);
  const auto violations = validate_dataset(examples);
  if (!violations.empty()) {
    throw PipelineError("config_error", "dataset " + path.string() + ": " +
                                            violations.front().kind + " (" +
                                            violations.front().message + ")");
  }
  return examples;
}

}  // namespace

int cmd_optimize(const fs::path& config_path) {
  store::RunConfig config;
  try {
    config = store::load_run_config(config_path);
  } catch (const PipelineError& e) {
    std::cerr << "optimize: [" << e.kind() << "] " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const json snapshot = store::config_snapshot(config);
    const auto existing = store::read_manifest(config.run_dir);
    if (existing.has_value() && existing->config != snapshot) {
      std::cerr << "optimize: run directory " << config.run_dir.string()
                << " was created with a different config; refusing to mix trajectories\n";
      return kExitConfig;
    }
    if (existing.has_value() && existing->status == store::RunStatus::completed) {
      std::cout << "run already completed: " << config.run_dir.string() << " ("
                << existing->iteration_count << " iterations)\n";
      return kExitOk;
    }

    const auto train = load_validated_dataset(config.train_path);
    if (train.empty()) {
      std::cerr << "optimize: train split is empty: " << config.train_path.string() << "\n";
      return kExitConfig;
    }
    const PromptProgram seed = store::resolve_seed_prompt(
        config, templates::template_for_kind(train.front().task_kind));

    fs::create_directories(config.run_dir);
    store::RunLock lock(config.run_dir);

    store::RunManifest manifest;
    int start_iteration = 0;
    Memory memory;
    PromptProgram current = seed;
    if (existing.has_value()) {
      manifest = *existing;
      auto resume = store::load_resume_state(config.run_dir, manifest, seed);
      manifest.status = store::RunStatus::running;
      manifest.error_kind.clear();
      manifest.error_message.clear();
      manifest.iteration_count = resume.next_iteration;
      manifest.artifact_hashes.erase("abort.json");
      fs::remove(config.run_dir / "abort.json");
      if (resume.completed) {
        store::RunWriter writer(config.run_dir, std::move(manifest));
        writer.mark_completed();
        std::cout << "run already completed: " << config.run_dir.string() << " ("
                  << resume.next_iteration << " iterations)\n";
        return kExitOk;
      }
      start_iteration = resume.next_iteration;
      memory = std::move(resume.memory);
      current = std::move(resume.current);
      if (start_iteration > 0) {
        std::cout << "resuming " << config.run_dir.string() << " at iteration "
                  << start_iteration << "\n";
      }
    } else {
      manifest.config = snapshot;
    }

    store::RunWriter writer(config.run_dir, std::move(manifest));
    writer.write_prompt(current);
    writer.write_manifest();

    llm::ChatClient client;
    diag::CritiqueConfig critique;
    critique.critic_provider = config.critic;
    critique.critic_template = config.critic_template.has_value()
                                   ? *config.critic_template
                                   : templates::template_for_kind(train.front().task_kind);
    critique.temperature = config.temperatures.critic;
    optimize::DiagnosticPipeline pipeline(client, train, config.target, critique,
                                          config.clustering, config.clusterer,
                                          config.random_seed, config.temperatures.target,
                                          config.temperatures.clusterer);
    optimize::LoopConfig loop = config.loop;
    loop.optimizer_provider = config.optimizer;
    loop.optimizer_temperature = config.temperatures.optimizer;

    optimize::LoopHooks hooks;
    hooks.on_iteration = [&writer](const optimize::IterationRecord& record,
                                   const optimize::PipelineOutcome& outcome,
                                   const Memory& mem) {
      writer.write_iteration(record, outcome, mem);
    };
    hooks.on_abort = [&writer](int iteration_index, const PromptProgram& prompt,
                               const PipelineError& error) {
      writer.write_abort(iteration_index, prompt, error);
    };

    const auto outcome = optimize::run_optimization(client, current, loop, pipeline, hooks,
                                                    start_iteration, std::move(memory));
    writer.mark_completed();
    const int total = start_iteration + static_cast<int>(outcome.records.size());
    std::cout << "completed " << total << " iteration(s) ("
              << (outcome.stopped ? "optimizer stopped" : "iteration budget reached")
              << "): " << config.run_dir.string() << "\n";
    return kExitOk;
  } catch (const PipelineError& e) {
    std::cerr << "optimize: [" << e.kind() << "] " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_select(const fs::path& run_dir, std::optional<double> lambda,
               std::optional<bool> confidence_aware) {
  try {
    const auto manifest = store::read_manifest(run_dir);
    if (!manifest.has_value()) {
      std::cerr << "select: no run manifest in " << run_dir.string() << "\n";
      return kExitConfig;
    }
    SnapshotView snap = view_snapshot(manifest->config);
    select::SelectionPolicy policy = snap.policy;
    if (confidence_aware.has_value()) {
      policy.mode = *confidence_aware ? select::SelectionMode::confidence_aware
                                      : select::SelectionMode::task_only;
    }
    if (lambda.has_value()) {
      if (*lambda < 0.0) {
        std::cerr << "select: --lambda must be >= 0\n";
        return kExitConfig;
      }
      policy.lambda_brier = *lambda;
    }

    store::RunLock lock(run_dir);
    const auto candidates = store::load_candidates(run_dir);
    if (candidates.empty()) {
      std::cerr << "select: no candidate prompts in " << run_dir.string() << "\n";
      return kExitConfig;
    }
    for (const auto& [name, path] :
         {std::pair<const char*, const fs::path&>{"dev", snap.dev_path},
          std::pair<const char*, const fs::path&>{"test", snap.test_path}}) {
      if (!fs::exists(path)) {
        std::cerr << "select: " << name << " split path does not exist: " << path.string()
                  << "\n";
        return kExitConfig;
      }
    }
    const auto dev = load_validated_dataset(snap.dev_path);
    const auto test = load_validated_dataset(snap.test_path);
    if (dev.empty()) {
      std::cerr << "select: dev split is empty: " << snap.dev_path.string() << "\n";
      return kExitConfig;
    }
    if (test.empty()) {
      std::cerr << "select: test split is empty: " << snap.test_path.string() << "\n";
      return kExitConfig;
    }

    llm::ChatClient client;
    const select::EvalCache cache(run_dir / "evalcache");
    const auto dev_metrics = select::evaluate_candidates_on_dev(
        client, candidates, dev, snap.target, &cache, snap.target_temperature);
    std::vector<select::Candidate> scored;
    for (const auto& candidate : candidates) {
      const auto it = dev_metrics.find(candidate.iteration_index);
      if (it != dev_metrics.end()) scored.push_back({candidate, it->second});
    }
    if (scored.empty()) {
      std::cerr << "select: every candidate failed dev evaluation\n";
      return kExitAbort;
    }
    auto result = select::select_final(scored, policy);

    const auto test_run = evals::evaluate_split(client, result.chosen, test,
                                                evals::Split::test, snap.target,
                                                snap.target_temperature);
    result.test_metrics = test_run.metrics;

    store::RunWriter writer(run_dir, *manifest);
    writer.persist("eval_test_" + std::to_string(result.chosen.iteration_index) + ".json",
                   json(test_run));
    json phi_table = json::object();
    json dev_table = json::object();
    for (const auto& [iteration, value] : result.phi_values) {
      phi_table[std::to_string(iteration)] = value;
    }
    for (const auto& [iteration, metrics] : result.dev_runs) {
      dev_table[std::to_string(iteration)] = metrics;
    }
    writer.persist("selection.json",
                   json{{"policy",
                         {{"mode", select::to_string(policy.mode)},
                          {"lambda_brier", policy.lambda_brier}}},
                        {"chosen_iteration", result.chosen.iteration_index},
                        {"chosen_prompt_id", result.chosen.prompt_id},
                        {"phi", phi_table},
                        {"dev_metrics", dev_table},
                        {"test_metrics", *result.test_metrics}});
    writer.set_chosen_iteration(result.chosen.iteration_index);
    writer.write_manifest();

    std::cout << "iteration  dev_task  dev_brier       phi  chosen\n";
    for (const auto& [iteration, metrics] : result.dev_runs) {
      char row[128];
      std::snprintf(row, sizeof row, "%9d  %8.4f  %9.4f  %8.4f  %s", iteration,
                    metrics.task_score, metrics.brier, result.phi_values.at(iteration),
                    iteration == result.chosen.iteration_index ? "*" : "");
      std::cout << row << "\n";
    }
    std::cout << "chosen: " << result.chosen.prompt_id << " (iteration "
              << result.chosen.iteration_index << ", mode "
              << select::to_string(policy.mode) << ")\n";
    std::cout << "test: task_score " << fmt4(result.test_metrics->task_score) << ", brier "
              << fmt4(result.test_metrics->brier) << ", mean_confidence "
              << fmt4(result.test_metrics->mean_confidence) << "\n";
    return kExitOk;
  } catch (const PipelineError& e) {
    std::cerr << "select: [" << e.kind() << "] " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_analyze(const std::vector<fs::path>& run_dirs, const fs::path& out_dir,
                int k_topics) {
  if (run_dirs.empty()) {
    std::cerr << "analyze: no run directories given\n";
    return kExitConfig;
  }
  if (k_topics < 1) {
    std::cerr << "analyze: k_topics must be >= 1\n";
    return kExitConfig;
  }
  try {
    std::optional<SnapshotView> snap;
    analytics::TransitionTable table;
    std::vector<std::pair<std::size_t, std::string>> atom_slots;  // transition row, atom text
    std::vector<std::set<std::string>> activity_frames;  // empty frame separates runs
    llm::ChatClient client;

    for (const auto& dir : run_dirs) {
      const auto manifest = store::read_manifest(dir);
      if (!manifest.has_value()) {
        std::cerr << "analyze: no run manifest in " << dir.string() << "\n";
        return kExitConfig;
      }
      if (!snap.has_value()) snap = view_snapshot(manifest->config);
      const auto records = store::load_iteration_records(dir);
      if (records.size() < 2) {
        std::cerr << "analyze: " << dir.string() << " has " << records.size()
                  << " iteration(s); at least 2 are needed for a transition\n";
        return kExitConfig;
      }
      if (!activity_frames.empty()) activity_frames.emplace_back();
      for (const auto& record : records) {
        std::set<std::string> frame;
        for (const auto& topic : record.report.retained_topics) {
          frame.insert(topic.topic_label);
        }
        activity_frames.push_back(std::move(frame));
      }
      for (std::size_t i = 0; i + 1 < records.size(); ++i) {
        const auto& before = records[i];
        const auto& after = records[i + 1];
        analytics::Transition transition;
        transition.transition_index = static_cast<int>(table.transitions.size());
        std::set<std::string> failure_labels;
        for (const auto& topic : before.report.retained_topics) {
          failure_labels.insert(topic.topic_label);
        }
        transition.failure_topics.assign(failure_labels.begin(), failure_labels.end());
        transition.delta_task_score =
            after.report.metrics.task_score - before.report.metrics.task_score;
        transition.delta_brier = after.report.metrics.brier - before.report.metrics.brier;
        const bool patched =
            before.decision.kind == DecisionKind::patch &&
            (before.prompt_before.system_message != after.prompt_before.system_message ||
             before.prompt_before.user_instruction != after.prompt_before.user_instruction);
        if (patched) {
          const auto atoms = analytics::extract_patch_atoms(
              client, before.prompt_before, after.prompt_before, snap->clusterer);
          for (const auto& atom : atoms) {
            atom_slots.emplace_back(table.transitions.size(), atom.text);
          }
        }
        table.transitions.push_back(std::move(transition));
      }
    }

    if (!atom_slots.empty()) {
      std::vector<std::string> texts;
      texts.reserve(atom_slots.size());
      for (const auto& [slot, text] : atom_slots) texts.push_back(text);
      const int k = std::min(k_topics, static_cast<int>(texts.size()));
      const auto labels =
          analytics::cluster_trace_topics(client, texts, k, snap->clusterer, snap->random_seed);
      for (std::size_t i = 0; i < atom_slots.size(); ++i) {
        const auto it = labels.find(static_cast<int>(i));
        if (it == labels.end()) continue;
        auto& topics = table.transitions[atom_slots[i].first].patch_topics;
        if (std::find(topics.begin(), topics.end(), it->second) == topics.end()) {
          topics.push_back(it->second);
        }
      }
    }

    std::map<std::string, std::vector<bool>> activity;
    std::set<std::string> all_labels;
    for (const auto& frame : activity_frames) all_labels.insert(frame.begin(), frame.end());
    for (const auto& label : all_labels) {
      auto& sequence = activity[label];
      sequence.reserve(activity_frames.size());
      for (const auto& frame : activity_frames) sequence.push_back(frame.count(label) > 0);
    }

    fs::create_directories(out_dir);
    const auto open_csv = [&out_dir](const char* name) {
      std::ofstream out(out_dir / name, std::ios::binary | std::ios::trunc);
      if (!out) {
        throw PipelineError("config_error",
                            "cannot write: " + (out_dir / name).string());
      }
      return out;
    };
    {
      auto out = open_csv("alignment.csv");
      analytics::write_alignment_csv(analytics::alignment_matrix(table), out);
    }
    {
      auto out = open_csv("patch_deltas.csv");
      analytics::write_delta_csv(
          analytics::delta_association(table, analytics::DeltaBy::patch_topic),
          "patch_topic", out);
    }
    {
      auto out = open_csv("failure_deltas.csv");
      analytics::write_delta_csv(
          analytics::delta_association(table, analytics::DeltaBy::failure_topic),
          "failure_topic", out);
    }
    {
      auto out = open_csv("persistence.csv");
      analytics::write_persistence_csv(analytics::persistence_run_lengths(activity), out);
    }
    std::cout << "analyzed " << table.transitions.size() << " transition(s) from "
              << run_dirs.size() << " run(s) into " << out_dir.string() << "\n";
    return kExitOk;
  } catch (const PipelineError& e) {
    std::cerr << "analyze: [" << e.kind() << "] " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::invalid_argument& e) {
    std::cerr << "analyze: " << e.what() << "\n";
    return kExitConfig;
  }
}

int cmd_report(const fs::path& run_dir, std::ostream& out) {
  try {
    const auto manifest = store::read_manifest(run_dir);
    if (!manifest.has_value()) {
      std::cerr << "report: no run manifest in " << run_dir.string() << "\n";
      return kExitConfig;
    }
    const auto records = store::load_iteration_records(run_dir);

    out << "# Optimization run report\n\n";
    out << "- status: " << store::to_string(manifest->status) << "\n";
    out << "- iterations: " << manifest->iteration_count << "\n";
    if (manifest->chosen_iteration.has_value()) {
      out << "- chosen iteration: " << *manifest->chosen_iteration << "\n";
    }
    if (manifest->status == store::RunStatus::aborted) {
      const auto abort_path = run_dir / "abort.json";
      if (fs::exists(abort_path)) {
        const json abort_info = store::read_json_file(abort_path);
        out << "- aborted at iteration " << abort_info.value("iteration_index", 0) << ": ["
            << abort_info.value("error_kind", std::string{}) << "] "
            << abort_info.value("error_message", std::string{}) << "\n";
      } else {
        out << "- aborted: [" << manifest->error_kind << "] " << manifest->error_message
            << "\n";
      }
    }

    out << "\n## Trajectory\n\n";
    if (records.empty()) {
      out << "No completed iterations.\n";
    } else {
      out << "| iteration | task_score | mean_confidence | brier | prompt_chars | "
             "prompt_tokens | decision |\n";
      out << "|---:|---:|---:|---:|---:|---:|:---|\n";
      for (const auto& record : records) {
        out << "| " << record.iteration_index << " | " << fmt4(record.report.metrics.task_score)
            << " | " << fmt4(record.report.metrics.mean_confidence) << " | "
            << fmt4(record.report.metrics.brier) << " | " << record.prompt_before.length_chars
            << " | " << record.prompt_before.length_tokens_approx << " | "
            << to_string(record.decision.kind) << " |\n";
      }

      out << "\n## Retained failure topics\n";
      for (const auto& record : records) {
        out << "\n### Iteration " << record.iteration_index << "\n\n";
        if (record.report.retained_topics.empty()) {
          out << "- none\n";
          continue;
        }
        for (const auto& topic : record.report.retained_topics) {
          char pct[32];
          std::snprintf(pct, sizeof pct, "%.1f", topic.size_fraction * 100.0);
          out << "- " << topic.topic_label << " (" << pct << "% of diagnoses, "
              << topic.member_ids.size() << " members): " << topic.description << "\n";
        }
      }
    }

    const auto selection_path = run_dir / "selection.json";
    if (fs::exists(selection_path)) {
      const json selection = store::read_json_file(selection_path);
      out << "\n## Selection\n\n";
      out << "- mode: " << selection.at("policy").value("mode", std::string{})
          << " (lambda_brier " << selection.at("policy").at("lambda_brier").dump() << ")\n";
      out << "- chosen iteration: " << selection.at("chosen_iteration").get<int>() << "\n\n";
      out << "| iteration | phi | dev_task_score | dev_brier |\n";
      out << "|---:|---:|---:|---:|\n";
      std::map<int, double> phi_rows;
      for (const auto& [key, value] : selection.at("phi").items()) {
        phi_rows[std::stoi(key)] = value.get<double>();
      }
      for (const auto& [iteration, value] : phi_rows) {
        const MetricSet metrics =
            selection.at("dev_metrics").at(std::to_string(iteration)).get<MetricSet>();
        out << "| " << iteration << " | " << fmt4(value) << " | " << fmt4(metrics.task_score)
            << " | " << fmt4(metrics.brier) << " |\n";
      }
      if (selection.contains("test_metrics")) {
        const MetricSet metrics = selection.at("test_metrics").get<MetricSet>();
        out << "\n- test: task_score " << fmt4(metrics.task_score) << ", brier "
            << fmt4(metrics.brier) << ", mean_confidence " << fmt4(metrics.mean_confidence)
            << "\n";
      }
    }
    return kExitOk;
  } catch (const PipelineError& e) {
    std::cerr << "report: [" << e.kind() << "] " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "report: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace promptopt::cli
