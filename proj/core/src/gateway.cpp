#include "promptopt/gateway.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "promptopt/mock_transport.hpp"

namespace promptopt::llm {

using nlohmann::json;

std::string to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool: return "tool";
  }
  return "user";
}

std::string to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::tool_call: return "tool_call";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "stop";
}

ChatMessage system_message(std::string content) {
  return ChatMessage{Role::system, std::move(content), {}, {}, {}};
}

ChatMessage user_message(std::string content) {
  return ChatMessage{Role::user, std::move(content), {}, {}, {}};
}

ChatMessage assistant_message(std::string content) {
  return ChatMessage{Role::assistant, std::move(content), {}, {}, {}};
}

ChatMessage assistant_tool_call_message(std::vector<ToolCall> calls) {
  return ChatMessage{Role::assistant, "", std::move(calls), {}, {}};
}

ChatMessage tool_result_message(const ToolCall& call, std::string content) {
  return ChatMessage{Role::tool, std::move(content), {}, call.id, call.name};
}

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace

std::string fingerprint_messages(
    const std::vector<std::pair<std::string, std::string>>& role_content) {
  std::uint64_t h = kFnvOffset;
  for (const auto& [role, content] : role_content) {
    h = fnv1a(h, role);
    h = fnv1a(h, "\x1f");
    h = fnv1a(h, content);
    h = fnv1a(h, "\x1e");
  }
  return to_hex(h);
}

std::string request_fingerprint(const ChatRequest& request) {
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(request.messages.size());
  for (const ChatMessage& m : request.messages) {
    pairs.emplace_back(to_string(m.role), m.content);
  }
  return fingerprint_messages(pairs);
}

json build_wire_request(const ChatRequest& request, const ProviderConfig& provider) {
  json messages = json::array();
  for (const ChatMessage& m : request.messages) {
    json jm{{"role", to_string(m.role)}, {"content", m.content}};
    if (!m.tool_calls.empty()) {
      json calls = json::array();
      for (const ToolCall& call : m.tool_calls) {
        calls.push_back({{"id", call.id},
                         {"type", "function"},
                         {"function", {{"name", call.name}, {"arguments", call.arguments_json}}}});
      }
      jm["tool_calls"] = std::move(calls);
    }
    if (m.role == Role::tool) {
      jm["tool_call_id"] = m.tool_call_id;
    }
    messages.push_back(std::move(jm));
  }
  json body{{"model", provider.model_name},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens}};
  if (!request.tools.empty()) {
    json tools = json::array();
    for (const ToolDecl& tool : request.tools) {
      tools.push_back({{"type", "function"},
                       {"function",
                        {{"name", tool.name},
                         {"description", tool.description},
                         {"parameters", tool.parameters}}}});
    }
    body["tools"] = std::move(tools);
  }
  if (request.response_schema.has_value()) {
    body["response_format"] = {{"type", "json_schema"},
                               {"json_schema",
                                {{"name", "structured_output"},
                                 {"schema", *request.response_schema},
                                 {"strict", true}}}};
  }
  return body;
}

namespace {

ChatResponse error_response(std::string kind, std::string message) {
  ChatResponse r;
  r.finish_reason = FinishReason::error;
  r.error_kind = std::move(kind);
  r.error_message = std::move(message);
  return r;
}

}  // namespace

ChatResponse parse_wire_response(const HttpResult& result) {
  if (result.status == 0) {
    const bool timed_out = result.transport_error.rfind("timeout", 0) == 0;
    return error_response(timed_out ? "timeout" : "transport_error",
                          result.transport_error.empty() ? "transport failure"
                                                         : result.transport_error);
  }
  if (result.status == 401 || result.status == 403) {
    return error_response("auth_error", "HTTP " + std::to_string(result.status));
  }
  if (result.status == 429) {
    return error_response("rate_limited", "HTTP 429");
  }
  if (result.status != 200) {
    // Remaining transient statuses (408, 5xx) surface as timeout-class.
    return error_response("timeout", "HTTP " + std::to_string(result.status));
  }

  json body = json::parse(result.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    return error_response("malformed_response", "non-JSON completion body");
  }
  try {
    const json& choices = body.at("choices");
    if (!choices.is_array() || choices.empty()) {
      return error_response("malformed_response", "empty choices array");
    }
    const json& message = choices.at(0).at("message");
    ChatResponse r;
    if (message.contains("tool_calls") && message.at("tool_calls").is_array()) {
      for (const json& jc : message.at("tool_calls")) {
        ToolCall call;
        call.id = jc.value("id", "");
        call.name = jc.at("function").at("name").get<std::string>();
        const json& args = jc.at("function").at("arguments");
        call.arguments_json = args.is_string() ? args.get<std::string>() : args.dump();
        r.tool_calls.push_back(std::move(call));
      }
    }
    // Exactly one of text / tool_calls carries the payload.
    if (r.tool_calls.empty() && message.contains("content") &&
        message.at("content").is_string()) {
      r.text = message.at("content").get<std::string>();
    }
    const std::string finish = choices.at(0).value("finish_reason", "stop");
    if (!r.tool_calls.empty()) {
      r.finish_reason = FinishReason::tool_call;
    } else if (finish == "length") {
      r.finish_reason = FinishReason::length;
    } else {
      r.finish_reason = FinishReason::stop;
    }
    if (r.text.empty() && r.tool_calls.empty()) {
      return error_response("malformed_response", "completion carries no content");
    }
    if (body.contains("usage")) {
      r.usage.prompt_tokens = body.at("usage").value("prompt_tokens", std::int64_t{0});
      r.usage.completion_tokens = body.at("usage").value("completion_tokens", std::int64_t{0});
    }
    return r;
  } catch (const json::exception& e) {
    return error_response("malformed_response", std::string("unexpected body shape: ") + e.what());
  }
}

ChatClient::ChatClient(std::shared_ptr<Transport> transport) : pinned_(std::move(transport)) {}

std::shared_ptr<Transport> ChatClient::resolve(const ProviderConfig& provider) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (pinned_) return pinned_;
  if (is_mock_provider(provider)) {
    const std::string key = mock_script_path(provider).string();
    auto it = mocks_.find(key);
    if (it == mocks_.end()) {
      it = mocks_.emplace(key, MockTransport::for_script(key)).first;
    }
    return it->second;
  }
  if (!http_) http_ = make_http_transport();
  return http_;
}

ChatResponse ChatClient::complete(const ChatRequest& request, const ProviderConfig& provider) {
  if (request.messages.empty()) {
    return error_response("malformed_response", "request has no messages");
  }
  if (!pinned_ && !is_mock_provider(provider) && !provider.api_key_env_var.empty() &&
      std::getenv(provider.api_key_env_var.c_str()) == nullptr) {
    return error_response("auth_error",
                          "API key env var not set: " + provider.api_key_env_var);
  }

  auto transport = resolve(provider);
  const json body = build_wire_request(request, provider);
  const int total_allowed = 1 + std::max(0, provider.max_retries);

  HttpResult result;
  for (int attempt = 0; attempt < total_allowed; ++attempt) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++attempts_;
    }
    result = transport->post_chat(body, provider);
    const bool transient = result.status == 0 || result.status == 408 ||
                           result.status == 429 || result.status >= 500;
    if (!transient) break;
    if (attempt + 1 >= total_allowed) break;
    if (provider.retry_backoff_ms > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(provider.retry_backoff_ms << attempt));
    }
  }
  return parse_wire_response(result);
}

std::vector<ChatResponse> ChatClient::evaluate_parallel(
    const std::vector<ChatRequest>& requests, const ProviderConfig& provider) {
  std::vector<ChatResponse> responses(requests.size());
  if (requests.empty()) return responses;

  const int workers = static_cast<int>(
      std::min<std::size_t>(std::max(1, provider.max_parallel), requests.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < requests.size(); ++i) {
      responses[i] = complete(requests[i], provider);
    }
    return responses;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
        responses[i] = complete(requests[i], provider);
      }
    });
  }
  for (std::thread& t : pool) t.join();
  return responses;
}

std::int64_t ChatClient::total_attempts() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return attempts_;
}

namespace {

std::string strip_code_fences(const std::string& text) {
  std::string s = text;
  const auto first = s.find("```");
  if (first == std::string::npos) return s;
  auto body_start = s.find('\n', first);
  if (body_start == std::string::npos) return s;
  ++body_start;
  const auto closing = s.find("```", body_start);
  if (closing == std::string::npos) return s.substr(body_start);
  return s.substr(body_start, closing - body_start);
}

std::optional<json> try_parse_object(const std::string& text) {
  json parsed = json::parse(text, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  return parsed;
}

bool has_required_keys(const json& value, const json& schema) {
  if (!schema.is_object() || !schema.contains("required")) return true;
  for (const json& key : schema.at("required")) {
    if (!value.contains(key.get<std::string>())) return false;
  }
  return true;
}

}  // namespace

ParsedStructured parse_structured(const ChatResponse& response, const json& schema) {
  ParsedStructured out;
  if (is_error(response) || response.text.empty()) {
    return out;
  }
  if (auto strict = try_parse_object(response.text);
      strict && has_required_keys(*strict, schema)) {
    out.status = ParseStatus::ok;
    out.value = std::move(*strict);
    return out;
  }
  // One repair attempt: drop code fences, then take the outermost object.
  std::string repaired = strip_code_fences(response.text);
  const auto open = repaired.find('{');
  const auto close = repaired.rfind('}');
  if (open != std::string::npos && close != std::string::npos && close > open) {
    repaired = repaired.substr(open, close - open + 1);
  }
  if (auto second = try_parse_object(repaired);
      second && has_required_keys(*second, schema)) {
    out.status = ParseStatus::repaired;
    out.value = std::move(*second);
    return out;
  }
  return out;
}

}  // namespace promptopt::llm
