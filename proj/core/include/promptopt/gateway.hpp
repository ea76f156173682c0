#pragma once
// Provider-agnostic chat-completion access. The wire contract is the
// de-facto OpenAI-compatible JSON shape: POST {base_url}/chat/completions
// with a messages array, optional tool declarations, and optional
// response_format. A deterministic scripted mock transport serves
// base_url values of the form "mock://<script-path>" for offline runs.

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptopt/domain.hpp"

namespace promptopt::llm {

enum class Role { system, user, assistant, tool };

std::string to_string(Role role);

struct ToolCall {
  std::string id;
  std::string name;
  std::string arguments_json;
};

struct ChatMessage {
  Role role = Role::user;
  std::string content;
  std::vector<ToolCall> tool_calls;  // assistant echo when continuing after a tool call
  std::string tool_call_id;          // tool role only
  std::string tool_name;             // tool role only
};

ChatMessage system_message(std::string content);
ChatMessage user_message(std::string content);
ChatMessage assistant_message(std::string content);
ChatMessage assistant_tool_call_message(std::vector<ToolCall> calls);
ChatMessage tool_result_message(const ToolCall& call, std::string content);

struct ToolDecl {
  std::string name;
  std::string description;
  nlohmann::json parameters;  // JSON-schema object
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::optional<nlohmann::json> response_schema;
  std::vector<ToolDecl> tools;
  double temperature = 0.0;
  int max_output_tokens = 4096;
};

enum class FinishReason { stop, tool_call, length, error };

std::string to_string(FinishReason reason);

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  std::vector<ToolCall> tool_calls;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  std::string error_kind;  // auth_error | timeout | rate_limited | malformed_response | transport_error
  std::string error_message;
};

inline bool is_error(const ChatResponse& r) { return r.finish_reason == FinishReason::error; }

struct ProviderConfig {
  std::string base_url;
  std::string model_name;
  std::string api_key_env_var;
  int max_parallel = 4;
  int max_retries = 2;
  int retry_backoff_ms = 250;
  int request_timeout_ms = 60000;
};

inline bool is_mock_provider(const ProviderConfig& p) {
  return p.base_url.rfind("mock://", 0) == 0;
}

// Stable 64-bit FNV-1a over the (role, content) message sequence,
// hex-encoded. Identical conversations hash identically across runs.
std::string request_fingerprint(const ChatRequest& request);
std::string fingerprint_messages(const std::vector<std::pair<std::string, std::string>>& role_content);

// Raw transport result: HTTP status + body, or a transport-level error
// (connect failure, timeout) with status 0.
struct HttpResult {
  int status = 0;
  std::string body;
  std::string transport_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResult post_chat(const nlohmann::json& request_body,
                               const ProviderConfig& provider) = 0;
};

// Builds the OpenAI-shaped request body / parses the response body.
nlohmann::json build_wire_request(const ChatRequest& request, const ProviderConfig& provider);
ChatResponse parse_wire_response(const HttpResult& result);

class ChatClient {
 public:
  ChatClient() = default;
  // Tests may pin a transport; otherwise transports resolve from the
  // provider's base_url scheme (mock:// or http(s)://).
  explicit ChatClient(std::shared_ptr<Transport> transport);

  // Never throws for per-request failures: transport and protocol errors
  // come back as error-marked responses. Retries transient failures
  // (connect errors, 408/429/5xx) up to max_retries with exponential
  // backoff; 401/403 surface immediately as auth_error.
  ChatResponse complete(const ChatRequest& request, const ProviderConfig& provider);

  // Order-preserving bounded fan-out: response[i] always corresponds to
  // request[i], with at most provider.max_parallel requests in flight.
  std::vector<ChatResponse> evaluate_parallel(const std::vector<ChatRequest>& requests,
                                              const ProviderConfig& provider);

  // Total POST attempts issued through this client (retries included).
  std::int64_t total_attempts() const;

 private:
  std::shared_ptr<Transport> resolve(const ProviderConfig& provider);

  std::shared_ptr<Transport> pinned_;
  std::shared_ptr<Transport> http_;
  std::unordered_map<std::string, std::shared_ptr<Transport>> mocks_;
  mutable std::mutex mutex_;
  std::int64_t attempts_ = 0;
};

struct ParsedStructured {
  ParseStatus status = ParseStatus::failed;
  nlohmann::json value;  // object on ok/repaired, null on failed
};

// Strict JSON parse of the response text; `schema` lists required keys
// via {"required": [...]}. On failure, exactly one repair attempt (strip
// code fences, extract the outermost JSON object); a second failure
// yields status failed.
ParsedStructured parse_structured(const ChatResponse& response, const nlohmann::json& schema);

std::shared_ptr<Transport> make_http_transport();

}  // namespace promptopt::llm
