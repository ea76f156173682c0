#include "promptopt/runstore.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>

#include "promptopt/json_io.hpp"

namespace promptopt::llm {

using nlohmann::json;

void to_json(json& j, const ProviderConfig& p) {
  j = json{{"base_url", p.base_url},
           {"model_name", p.model_name},
           {"api_key_env_var", p.api_key_env_var},
           {"max_parallel", p.max_parallel},
           {"max_retries", p.max_retries},
           {"retry_backoff_ms", p.retry_backoff_ms},
           {"request_timeout_ms", p.request_timeout_ms}};
}

void from_json(const json& j, ProviderConfig& p) {
  p.base_url = j.at("base_url").get<std::string>();
  p.model_name = j.at("model_name").get<std::string>();
  p.api_key_env_var = j.value("api_key_env_var", "");
  p.max_parallel = j.value("max_parallel", 4);
  p.max_retries = j.value("max_retries", 2);
  p.retry_backoff_ms = j.value("retry_backoff_ms", 250);
  p.request_timeout_ms = j.value("request_timeout_ms", 60000);
}

}  // namespace promptopt::llm

namespace promptopt::store {

using nlohmann::json;

namespace {

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

llm::ProviderConfig provider_or(const json& providers, const char* name,
                                const std::optional<llm::ProviderConfig>& fallback) {
  if (providers.contains(name)) return providers.at(name).get<llm::ProviderConfig>();
  if (fallback.has_value()) return *fallback;
  throw PipelineError("config_error", std::string("missing provider: ") + name);
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw PipelineError("config_error", "cannot open file: " + path.string());
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw PipelineError("config_error", "invalid JSON in: " + path.string());
  }
  return j;
}

RunConfig load_run_config(const std::filesystem::path& config_path) {
  const json j = read_json_file(config_path);
  if (!j.is_object()) {
    throw PipelineError("config_error", "run config must be a JSON object");
  }
  const auto base = config_path.has_parent_path() ? config_path.parent_path()
                                                  : std::filesystem::path(".");
  RunConfig cfg;
  try {
    const json& datasets = j.at("datasets");
    cfg.train_path = resolve_path(base, datasets.at("train").get<std::string>());
    cfg.dev_path = resolve_path(base, datasets.at("dev").get<std::string>());
    cfg.test_path = resolve_path(base, datasets.at("test").get<std::string>());

    const json& providers = j.at("providers");
    cfg.target = provider_or(providers, "target", std::nullopt);
    cfg.optimizer = provider_or(providers, "optimizer", std::nullopt);
    cfg.critic = provider_or(providers, "critic", cfg.target);
    cfg.clusterer = provider_or(providers, "clusterer", cfg.target);

    if (j.contains("loop")) {
      const json& loop = j.at("loop");
      cfg.loop.max_iterations = loop.value("max_iterations", 10);
      cfg.loop.report_char_budget = loop.value("report_char_budget", 8000);
      cfg.loop.confidence_aware = loop.value("confidence_aware", true);
    }
    if (j.contains("clustering")) {
      const json& clustering = j.at("clustering");
      cfg.clustering.k_topics = clustering.value("k_topics", 10);
      cfg.clustering.retention_fraction = clustering.value("retention_fraction", 0.10);
      cfg.clustering.sample_for_induction = clustering.value("sample_for_induction", 40);
      cfg.clustering.assignment_batch_size = clustering.value("assignment_batch_size", 20);
    }
    if (j.contains("selection")) {
      const json& selection = j.at("selection");
      cfg.selection.mode =
          select::selection_mode_from_string(selection.value("mode", "task_only"));
      cfg.selection.lambda_brier = selection.value("lambda_brier", 0.5);
    }
    if (j.contains("seed_prompt")) {
      const json& seed = j.at("seed_prompt");
      if (seed.contains("template")) {
        cfg.seed_template = seed.at("template").get<std::string>();
        templates::template_from_string(cfg.seed_template);  // validate early
      } else if (seed.contains("path")) {
        cfg.seed_prompt_path = resolve_path(base, seed.at("path").get<std::string>());
      }
    }
    if (j.contains("critic_template")) {
      cfg.critic_template =
          templates::template_from_string(j.at("critic_template").get<std::string>());
    }
    if (j.contains("temperatures")) {
      const json& t = j.at("temperatures");
      cfg.temperatures.target = t.value("target", 0.0);
      cfg.temperatures.critic = t.value("critic", 0.3);
      cfg.temperatures.clusterer = t.value("clusterer", 0.0);
      cfg.temperatures.optimizer = t.value("optimizer", 1.0);
    }
    cfg.run_dir = resolve_path(base, j.at("run_dir").get<std::string>());
    cfg.random_seed = j.value("random_seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw PipelineError("config_error",
                        "run config " + config_path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw PipelineError("config_error",
                        "run config " + config_path.string() + ": " + e.what());
  }

  for (const auto* path : {&cfg.train_path, &cfg.dev_path, &cfg.test_path}) {
    if (!std::filesystem::exists(*path)) {
      throw PipelineError("config_error", "dataset path does not exist: " + path->string());
    }
  }
  if (cfg.train_path == cfg.dev_path || cfg.train_path == cfg.test_path ||
      cfg.dev_path == cfg.test_path) {
    throw PipelineError("config_error", "train/dev/test paths must be pairwise distinct");
  }
  if (!cfg.seed_prompt_path.empty() && !std::filesystem::exists(cfg.seed_prompt_path)) {
    throw PipelineError("config_error",
                        "seed prompt path does not exist: " + cfg.seed_prompt_path.string());
  }
  if (cfg.loop.max_iterations < 1) {
    throw PipelineError("config_error", "loop.max_iterations must be >= 1");
  }
  if (cfg.clustering.k_topics < 1) {
    throw PipelineError("config_error", "clustering.k_topics must be >= 1");
  }
  if (cfg.clustering.retention_fraction <= 0.0 || cfg.clustering.retention_fraction >= 1.0) {
    throw PipelineError("config_error", "clustering.retention_fraction must be in (0,1)");
  }
  if (cfg.clustering.sample_for_induction < cfg.clustering.k_topics) {
    throw PipelineError("config_error",
                        "clustering.sample_for_induction must be >= k_topics");
  }
  if (cfg.selection.lambda_brier < 0.0) {
    throw PipelineError("config_error", "selection.lambda_brier must be >= 0");
  }
  return cfg;
}

json config_snapshot(const RunConfig& config) {
  json seed = json::object();
  if (!config.seed_template.empty()) {
    seed["template"] = config.seed_template;
  } else if (!config.seed_prompt_path.empty()) {
    seed["path"] = config.seed_prompt_path.generic_string();
  }
  json snapshot{
      {"datasets",
       {{"train", config.train_path.generic_string()},
        {"dev", config.dev_path.generic_string()},
        {"test", config.test_path.generic_string()}}},
      {"providers",
       {{"target", config.target},
        {"optimizer", config.optimizer},
        {"critic", config.critic},
        {"clusterer", config.clusterer}}},
      {"loop",
       {{"max_iterations", config.loop.max_iterations},
        {"report_char_budget", config.loop.report_char_budget},
        {"confidence_aware", config.loop.confidence_aware}}},
      {"clustering",
       {{"k_topics", config.clustering.k_topics},
        {"retention_fraction", config.clustering.retention_fraction},
        {"sample_for_induction", config.clustering.sample_for_induction},
        {"assignment_batch_size", config.clustering.assignment_batch_size}}},
      {"selection",
       {{"mode", select::to_string(config.selection.mode)},
        {"lambda_brier", config.selection.lambda_brier}}},
      {"seed_prompt", seed},
      {"temperatures",
       {{"target", config.temperatures.target},
        {"critic", config.temperatures.critic},
        {"clusterer", config.temperatures.clusterer},
        {"optimizer", config.temperatures.optimizer}}},
      {"run_dir", config.run_dir.generic_string()},
      {"random_seed", config.random_seed}};
  if (config.critic_template.has_value()) {
    snapshot["critic_template"] = templates::to_string(*config.critic_template);
  }
  return snapshot;
}

PromptProgram resolve_seed_prompt(const RunConfig& config, templates::TaskTemplate fallback) {
  if (!config.seed_template.empty()) {
    return templates::seed_prompt(templates::template_from_string(config.seed_template));
  }
  if (!config.seed_prompt_path.empty()) {
    const json j = read_json_file(config.seed_prompt_path);
    try {
      return make_prompt_program("p0", 0, j.at("system_message").get<std::string>(),
                                 j.at("user_instruction").get<std::string>());
    } catch (const std::exception& e) {
      throw PipelineError("config_error", "seed prompt file " +
                                              config.seed_prompt_path.string() + ": " +
                                              e.what());
    }
  }
  return templates::seed_prompt(fallback);
}

std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::running: return "running";
    case RunStatus::completed: return "completed";
    case RunStatus::aborted: return "aborted";
  }
  return "running";
}

RunStatus run_status_from_string(std::string_view s) {
  if (s == "running") return RunStatus::running;
  if (s == "completed") return RunStatus::completed;
  if (s == "aborted") return RunStatus::aborted;
  throw std::invalid_argument("unknown run status: " + std::string(s));
}

void to_json(json& j, const RunManifest& m) {
  j = json{{"config", m.config},
           {"status", to_string(m.status)},
           {"iteration_count", m.iteration_count},
           {"chosen_iteration",
            m.chosen_iteration.has_value() ? json(*m.chosen_iteration) : json(nullptr)},
           {"artifacts", m.artifact_hashes},
           {"error_kind", m.error_kind},
           {"error_message", m.error_message},
           {"template_version", m.template_version}};
}

void from_json(const json& j, RunManifest& m) {
  m.config = j.value("config", json::object());
  m.status = run_status_from_string(j.value("status", "running"));
  m.iteration_count = j.value("iteration_count", 0);
  if (j.contains("chosen_iteration") && !j.at("chosen_iteration").is_null()) {
    m.chosen_iteration = j.at("chosen_iteration").get<int>();
  } else {
    m.chosen_iteration.reset();
  }
  m.artifact_hashes = j.value("artifacts", std::map<std::string, std::string>{});
  m.error_kind = j.value("error_kind", "");
  m.error_message = j.value("error_message", "");
  m.template_version = j.value("template_version", "");
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(static_cast<std::size_t>(length) * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

namespace {

// wall_time_ms is the only volatile field across otherwise identical
// runs; it never participates in content identity.
void strip_volatile(json& j) {
  if (j.is_object()) {
    j.erase("wall_time_ms");
    for (auto& [key, value] : j.items()) strip_volatile(value);
  } else if (j.is_array()) {
    for (json& item : j) strip_volatile(item);
  }
}

}  // namespace

std::string hash_artifact(const json& content) {
  json canonical = content;
  strip_volatile(canonical);
  return sha256_hex(canonical.dump());
}

std::string hash_artifact_file(const std::filesystem::path& path) {
  return hash_artifact(read_json_file(path));
}

void write_json_atomic(const std::filesystem::path& path, const json& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw PipelineError("config_error", "cannot write: " + tmp);
    }
    out << content.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

std::optional<RunManifest> read_manifest(const std::filesystem::path& run_dir) {
  const auto path = run_dir / "manifest.json";
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_json_file(path).get<RunManifest>();
}

RunLock::RunLock(const std::filesystem::path& run_dir) {
  const auto lock_path = (run_dir / "run.lock").string();
  fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw PipelineError("config_error", "cannot open lock file: " + lock_path);
  }
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw PipelineError("config_error",
                        "run directory is locked by another writer: " + run_dir.string());
  }
}

RunLock::~RunLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

RunWriter::RunWriter(std::filesystem::path run_dir, RunManifest manifest)
    : dir_(std::move(run_dir)), manifest_(std::move(manifest)) {
  std::filesystem::create_directories(dir_);
  write_manifest();
}

void RunWriter::persist(const std::string& name, const json& content) {
  write_json_atomic(dir_ / name, content);
  manifest_.artifact_hashes[name] = hash_artifact(content);
}

void RunWriter::write_manifest() {
  write_json_atomic(dir_ / "manifest.json", json(manifest_));
}

void RunWriter::write_prompt(const PromptProgram& prompt) {
  persist("prompt_" + std::to_string(prompt.iteration_index) + ".json", json(prompt));
}

void RunWriter::write_iteration(const optimize::IterationRecord& record,
                                const optimize::PipelineOutcome& outcome,
                                const Memory& memory) {
  const std::string t = std::to_string(record.iteration_index);
  write_prompt(record.prompt_before);
  persist("eval_train_" + t + ".json", json(outcome.run));
  persist("diagnostics_" + t + ".json", json{{"pool", outcome.pool},
                                             {"all_topics", outcome.all_topics},
                                             {"retained", outcome.report.retained_topics}});
  persist("iteration_" + t + ".json", json(record));
  if (record.decision.kind == DecisionKind::patch) {
    write_prompt(*record.decision.new_prompt);
  }
  persist("memory.json", json(memory));
  manifest_.iteration_count = std::max(manifest_.iteration_count, record.iteration_index + 1);
  write_manifest();
}

void RunWriter::write_abort(int iteration_index, const PromptProgram& current,
                            const PipelineError& error) {
  persist("abort.json", json{{"iteration_index", iteration_index},
                             {"prompt", current},
                             {"error_kind", error.kind()},
                             {"error_message", error.what()}});
  manifest_.status = RunStatus::aborted;
  manifest_.error_kind = error.kind();
  manifest_.error_message = error.what();
  write_manifest();
}

void RunWriter::set_chosen_iteration(int iteration_index) {
  manifest_.chosen_iteration = iteration_index;
}

void RunWriter::mark_completed() {
  manifest_.status = RunStatus::completed;
  manifest_.error_kind.clear();
  manifest_.error_message.clear();
  write_manifest();
}

namespace {

bool artifact_verifies(const std::filesystem::path& run_dir, const RunManifest& manifest,
                       const std::string& name) {
  const auto it = manifest.artifact_hashes.find(name);
  if (it == manifest.artifact_hashes.end()) return false;
  const auto path = run_dir / name;
  if (!std::filesystem::exists(path)) return false;
  try {
    return hash_artifact_file(path) == it->second;
  } catch (const PipelineError&) {
    return false;
  }
}

}  // namespace

ResumeState load_resume_state(const std::filesystem::path& run_dir,
                              const RunManifest& manifest, const PromptProgram& seed) {
  ResumeState state;
  state.current = seed;
  for (int t = 0;; ++t) {
    const std::string index = std::to_string(t);
    const bool verified = artifact_verifies(run_dir, manifest, "iteration_" + index + ".json") &&
                          artifact_verifies(run_dir, manifest, "eval_train_" + index + ".json") &&
                          artifact_verifies(run_dir, manifest, "diagnostics_" + index + ".json") &&
                          artifact_verifies(run_dir, manifest, "prompt_" + index + ".json");
    if (!verified) break;

    optimize::IterationRecord record;
    try {
      record = read_json_file(run_dir / ("iteration_" + index + ".json"))
                   .get<optimize::IterationRecord>();
    } catch (const std::exception&) {
      break;
    }
    if (record.iteration_index != t) break;
    if (record.decision.kind == DecisionKind::patch) {
      if (!record.decision.new_prompt.has_value() ||
          !artifact_verifies(run_dir, manifest,
                             "prompt_" + std::to_string(t + 1) + ".json")) {
        break;
      }
    }

    // Memory is rebuilt exactly as the loop built it: compress the stored
    // report with the decision rationale.
    state.memory = memory_append(
        std::move(state.memory),
        diag::compress_for_memory(record.report,
                                  record.decision.rationale.empty()
                                      ? std::nullopt
                                      : std::optional<std::string>(record.decision.rationale)));
    state.records.push_back(record);
    state.next_iteration = t + 1;
    if (record.decision.kind == DecisionKind::stop) {
      state.completed = true;
      break;
    }
    state.current = *state.records.back().decision.new_prompt;
  }
  return state;
}

std::vector<PromptProgram> load_candidates(const std::filesystem::path& run_dir) {
  std::vector<PromptProgram> candidates;
  for (int k = 0;; ++k) {
    const auto path = run_dir / ("prompt_" + std::to_string(k) + ".json");
    if (!std::filesystem::exists(path)) break;
    candidates.push_back(read_json_file(path).get<PromptProgram>());
  }
  return candidates;
}

std::vector<optimize::IterationRecord> load_iteration_records(
    const std::filesystem::path& run_dir) {
  std::vector<optimize::IterationRecord> records;
  for (int t = 0;; ++t) {
    const auto path = run_dir / ("iteration_" + std::to_string(t) + ".json");
    if (!std::filesystem::exists(path)) break;
    records.push_back(read_json_file(path).get<optimize::IterationRecord>());
  }
  return records;
}

}  // namespace promptopt::store
