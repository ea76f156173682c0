#include "promptopt/mock_transport.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "promptopt/domain.hpp"

namespace promptopt::llm {

using nlohmann::json;

namespace {

struct ScriptEntry {
  std::optional<std::string> fingerprint;
  std::vector<std::string> contains;
  int failure_remaining = 0;  // -1 = every matching call fails
  int failure_status = 500;   // 0 = transport-level timeout
  json response;              // null when the entry only injects failures
};

std::string render_conversation(const json& body) {
  std::string out;
  if (!body.contains("messages")) return out;
  for (const json& m : body.at("messages")) {
    out += m.value("role", "");
    out += ": ";
    if (m.contains("content") && m.at("content").is_string()) {
      out += m.at("content").get<std::string>();
    }
    if (m.contains("tool_calls")) {
      for (const json& call : m.at("tool_calls")) {
        out += " [tool_call " + call.at("function").value("name", "") + " " +
               call.at("function").value("arguments", "") + "]";
      }
    }
    out += '\n';
  }
  return out;
}

std::string body_fingerprint(const json& body) {
  std::vector<std::pair<std::string, std::string>> pairs;
  if (body.contains("messages")) {
    for (const json& m : body.at("messages")) {
      std::string content;
      if (m.contains("content") && m.at("content").is_string()) {
        content = m.at("content").get<std::string>();
      }
      pairs.emplace_back(m.value("role", ""), std::move(content));
    }
  }
  return fingerprint_messages(pairs);
}

// Expands a compact response spec into the wire-shaped completion body.
HttpResult synthesize(const json& spec, const json& request_body) {
  json message{{"role", "assistant"}};
  std::string finish = spec.value("finish_reason", "");
  std::int64_t completion_tokens = 0;

  if (spec.contains("tool_calls") && !spec.at("tool_calls").empty()) {
    json calls = json::array();
    int index = 0;
    for (const json& c : spec.at("tool_calls")) {
      const json& args = c.at("arguments");
      const std::string args_str = args.is_string() ? args.get<std::string>() : args.dump();
      completion_tokens += whitespace_token_count(args_str);
      calls.push_back({{"id", c.value("id", "call_" + std::to_string(index))},
                       {"type", "function"},
                       {"function", {{"name", c.at("name")}, {"arguments", args_str}}}});
      ++index;
    }
    message["content"] = nullptr;
    message["tool_calls"] = std::move(calls);
    if (finish.empty()) finish = "tool_calls";
  } else {
    const std::string text = spec.value("text", "");
    completion_tokens = whitespace_token_count(text);
    message["content"] = text;
    if (finish.empty()) finish = "stop";
  }

  std::int64_t prompt_tokens = 0;
  if (request_body.contains("messages")) {
    for (const json& m : request_body.at("messages")) {
      if (m.contains("content") && m.at("content").is_string()) {
        prompt_tokens += whitespace_token_count(m.at("content").get<std::string>());
      }
    }
  }

  json body{{"object", "chat.completion"},
            {"choices", json::array({json{{"index", 0},
                                          {"message", std::move(message)},
                                          {"finish_reason", finish}}})},
            {"usage",
             {{"prompt_tokens", prompt_tokens}, {"completion_tokens", completion_tokens}}}};
  return HttpResult{200, body.dump(), ""};
}

HttpResult injected_failure(int status) {
  if (status == 0) {
    return HttpResult{0, "", "timeout (injected)"};
  }
  return HttpResult{status, json{{"error", {{"message", "injected failure"}}}}.dump(), ""};
}

}  // namespace

struct MockTransport::Impl {
  std::vector<ScriptEntry> entries;
  std::vector<json> ordered;
  std::size_t ordered_next = 0;
  json fallback;  // null when absent
  int latency_ms = 0;

  MockStats stats;
  int in_flight = 0;
  std::mutex mu;
};

MockTransport::MockTransport(const std::filesystem::path& script_path)
    : impl_(std::make_unique<Impl>()) {
  std::ifstream in(script_path);
  if (!in) {
    throw PipelineError("config_error", "cannot open mock script: " + script_path.string());
  }
  json script = json::parse(in, nullptr, false);
  if (script.is_discarded() || !script.is_object()) {
    throw PipelineError("config_error", "mock script is not a JSON object: " + script_path.string());
  }
  impl_->latency_ms = script.value("latency_ms", 0);
  for (const json& je : script.value("entries", json::array())) {
    ScriptEntry entry;
    if (je.contains("fingerprint")) entry.fingerprint = je.at("fingerprint").get<std::string>();
    for (const json& needle : je.value("contains", json::array())) {
      entry.contains.push_back(needle.get<std::string>());
    }
    if (je.contains("failure")) {
      const json& f = je.at("failure");
      entry.failure_remaining = f.value("times", -1);
      entry.failure_status = f.value("status", 500);
    }
    if (je.contains("response")) entry.response = je.at("response");
    if (!entry.fingerprint && entry.contains.empty()) {
      throw PipelineError("config_error",
                          "mock entry needs a fingerprint or contains matcher: " +
                              script_path.string());
    }
    impl_->entries.push_back(std::move(entry));
  }
  for (const json& item : script.value("ordered", json::array())) {
    impl_->ordered.push_back(item);
  }
  if (script.contains("default")) impl_->fallback = script.at("default");
}

MockTransport::~MockTransport() = default;

HttpResult MockTransport::post_chat(const json& request_body, const ProviderConfig&) {
  int latency = 0;
  {
    std::lock_guard<std::mutex> lock(impl_->mu);
    ++impl_->stats.total_calls;
    ++impl_->in_flight;
    impl_->stats.peak_concurrency = std::max(impl_->stats.peak_concurrency, impl_->in_flight);
    latency = impl_->latency_ms;
  }
  if (latency > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(latency));
  }

  const std::string conversation = render_conversation(request_body);
  const std::string fp = body_fingerprint(request_body);

  std::lock_guard<std::mutex> lock(impl_->mu);
  --impl_->in_flight;

  for (ScriptEntry& entry : impl_->entries) {
    if (entry.fingerprint && *entry.fingerprint != fp) continue;
    bool all_found = true;
    for (const std::string& needle : entry.contains) {
      if (conversation.find(needle) == std::string::npos) {
        all_found = false;
        break;
      }
    }
    if (!all_found) continue;
    if (entry.failure_remaining != 0) {
      if (entry.failure_remaining > 0) --entry.failure_remaining;
      ++impl_->stats.failed_injections;
      return injected_failure(entry.failure_status);
    }
    if (!entry.response.is_null()) {
      return synthesize(entry.response, request_body);
    }
    // Failure budget exhausted and no response attached: try later entries.
  }

  if (impl_->ordered_next < impl_->ordered.size()) {
    const json item = impl_->ordered[impl_->ordered_next++];
    if (item.is_object() && item.contains("failure")) {
      ++impl_->stats.failed_injections;
      return injected_failure(item.at("failure").value("status", 500));
    }
    return synthesize(item, request_body);
  }

  if (!impl_->fallback.is_null()) {
    return synthesize(impl_->fallback, request_body);
  }

  // Unmatched requests indicate a fixture gap; surface a body that the
  // wire parser reports as malformed rather than silently succeeding.
  json miss{{"mock_error", "no matching entry"}, {"conversation", conversation}};
  return HttpResult{200, miss.dump(), ""};
}

MockStats MockTransport::stats() const {
  std::lock_guard<std::mutex> lock(impl_->mu);
  return impl_->stats;
}

namespace {

std::mutex& registry_mutex() {
  static std::mutex mu;
  return mu;
}

std::map<std::string, std::shared_ptr<MockTransport>>& registry() {
  static std::map<std::string, std::shared_ptr<MockTransport>> instances;
  return instances;
}

}  // namespace

std::shared_ptr<MockTransport> MockTransport::for_script(
    const std::filesystem::path& script_path) {
  const std::string key = script_path.lexically_normal().string();
  std::lock_guard<std::mutex> lock(registry_mutex());
  auto& reg = registry();
  auto it = reg.find(key);
  if (it == reg.end()) {
    it = reg.emplace(key, std::make_shared<MockTransport>(key)).first;
  }
  return it->second;
}

void MockTransport::reset_registry() {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry().clear();
}

std::filesystem::path mock_script_path(const ProviderConfig& provider) {
  if (!is_mock_provider(provider)) {
    throw PipelineError("config_error", "not a mock provider: " + provider.base_url);
  }
  return std::filesystem::path(provider.base_url.substr(7));
}

}  // namespace promptopt::llm
