#pragma once
// Run-directory persistence: config loading, flat JSON artifacts with an
// atomically rewritten manifest, content hashing for resumability, and a
// single-writer lock. Artifact hashes are computed over canonicalized
// JSON with volatile keys (wall_time_ms) dropped, so a resumed run and an
// uninterrupted run agree byte-for-byte at the manifest level.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptopt/diagnostics.hpp"
#include "promptopt/domain.hpp"
#include "promptopt/gateway.hpp"
#include "promptopt/optimizer.hpp"
#include "promptopt/selection.hpp"
#include "promptopt/templates.hpp"

namespace promptopt::llm {
void to_json(nlohmann::json& j, const ProviderConfig& p);
void from_json(const nlohmann::json& j, ProviderConfig& p);
}  // namespace promptopt::llm

namespace promptopt::store {

struct Temperatures {
  double target = 0.0;
  double critic = 0.3;
  double clusterer = 0.0;
  double optimizer = 1.0;
};

struct RunConfig {
  std::filesystem::path train_path;
  std::filesystem::path dev_path;
  std::filesystem::path test_path;
  llm::ProviderConfig target;
  llm::ProviderConfig optimizer;
  llm::ProviderConfig critic;
  llm::ProviderConfig clusterer;
  optimize::LoopConfig loop;  // optimizer_provider/temperature filled from the fields above
  diag::ClusteringConfig clustering;
  select::SelectionPolicy selection;
  std::string seed_template;                  // "qa" | "math" | "formula"; empty = path or kind default
  std::filesystem::path seed_prompt_path;     // JSON {system_message, user_instruction}
  std::optional<templates::TaskTemplate> critic_template;  // default: train[0].task_kind
  std::filesystem::path run_dir;
  std::uint64_t random_seed = 0;
  Temperatures temperatures;
};

// Parses and validates the JSON run config. Relative paths resolve
// against the config file's directory. Dataset paths must exist and be
// pairwise distinct. Throws `config_error`.
RunConfig load_run_config(const std::filesystem::path& config_path);

// Normalized JSON image of the config, stored in the manifest and
// compared on resume.
nlohmann::json config_snapshot(const RunConfig& config);

// Built-in template or seed file, as "p0" at iteration 0. `fallback` is
// used when the config names neither a template nor a path.
PromptProgram resolve_seed_prompt(const RunConfig& config, templates::TaskTemplate fallback);

enum class RunStatus { running, completed, aborted };

std::string to_string(RunStatus status);
RunStatus run_status_from_string(std::string_view s);

struct RunManifest {
  nlohmann::json config;
  RunStatus status = RunStatus::running;
  int iteration_count = 0;
  std::optional<int> chosen_iteration;
  std::map<std::string, std::string> artifact_hashes;  // file name -> sha256 hex
  std::string error_kind;     // aborted runs only
  std::string error_message;  // aborted runs only
  std::string template_version = templates::kTemplateVersion;
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

std::string sha256_hex(std::string_view bytes);

// Canonical content hash: volatile keys removed recursively, compact dump
// of the (key-sorted) JSON, sha256.
std::string hash_artifact(const nlohmann::json& content);
std::string hash_artifact_file(const std::filesystem::path& path);

// Write-temp-then-rename; readers never observe partial JSON.
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& content);
nlohmann::json read_json_file(const std::filesystem::path& path);  // throws config_error

std::optional<RunManifest> read_manifest(const std::filesystem::path& run_dir);

// flock(2)-backed single-writer lock on <run_dir>/run.lock; released on
// destruction and, via the kernel, on any process death. Throws
// `config_error` when another writer holds the directory.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

// Persists loop progress. Every artifact write updates the in-memory
// hash table; the manifest is rewritten atomically after each logical
// step, so a crash leaves at most one unrecorded (and safely
// re-creatable) iteration.
class RunWriter {
 public:
  RunWriter(std::filesystem::path run_dir, RunManifest manifest);

  const std::filesystem::path& dir() const { return dir_; }
  const RunManifest& manifest() const { return manifest_; }

  // Writes one artifact and records its hash (manifest not yet rewritten).
  void persist(const std::string& name, const nlohmann::json& content);
  void write_manifest();

  void write_prompt(const PromptProgram& prompt);
  void write_iteration(const optimize::IterationRecord& record,
                       const optimize::PipelineOutcome& outcome, const Memory& memory);
  void write_abort(int iteration_index, const PromptProgram& current,
                   const PipelineError& error);
  void set_chosen_iteration(int iteration_index);
  void mark_completed();

 private:
  std::filesystem::path dir_;
  RunManifest manifest_;
};

// Hash-verified prefix of a persisted trajectory. records holds the
// verified iterations; memory is rebuilt by re-compressing their stored
// reports; next_iteration and current resume the loop.
struct ResumeState {
  std::vector<optimize::IterationRecord> records;
  Memory memory;
  PromptProgram current;
  int next_iteration = 0;
  bool completed = false;  // a verified STOP record ends the trajectory
};

ResumeState load_resume_state(const std::filesystem::path& run_dir,
                              const RunManifest& manifest, const PromptProgram& seed);

// All persisted candidate prompts (prompt_{k}.json), ascending iteration.
std::vector<PromptProgram> load_candidates(const std::filesystem::path& run_dir);

std::vector<optimize::IterationRecord> load_iteration_records(
    const std::filesystem::path& run_dir);

}  // namespace promptopt::store
