#pragma once
// Deterministic scripted stand-in for a chat-completions endpoint.
//
// A script file is a JSON object:
//   {
//     "entries": [
//       {
//         "fingerprint": "<hex>",          // optional exact conversation hash
//         "contains": ["needle", ...],     // optional substrings; all must occur
//         "failure": {"times": 2, "status": 500},   // optional fault injection
//         "response": {"text": "...", "tool_calls": [{"name": ..., "arguments": {...}}],
//                      "finish_reason": "stop"}
//       }, ...
//     ],
//     "ordered": [ <response>, ... ],      // consumed by arrival order when no entry matches
//     "default": <response>                // optional fallback
//   }
//
// Entries are tried in order; an entry matches when its fingerprint (if
// present) equals the request fingerprint AND every "contains" needle
// occurs in the rendered "role: content" conversation. Content-keyed
// entries are safe under parallel fan-out; "ordered" is only
// deterministic for strictly sequential callers. failure.times = -1
// means every matching call fails.

#include <filesystem>
#include <memory>

#include "promptopt/gateway.hpp"

namespace promptopt::llm {

struct MockStats {
  std::int64_t total_calls = 0;
  std::int64_t failed_injections = 0;
  int peak_concurrency = 0;
};

class MockTransport : public Transport {
 public:
  explicit MockTransport(const std::filesystem::path& script_path);
  ~MockTransport() override;

  HttpResult post_chat(const nlohmann::json& request_body,
                       const ProviderConfig& provider) override;

  MockStats stats() const;

  // Shared per-path instances so a ChatClient and a test observe the
  // same counters. The registry key is the lexically-normal path.
  static std::shared_ptr<MockTransport> for_script(const std::filesystem::path& script_path);
  static void reset_registry();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Extracts "<script-path>" from "mock://<script-path>".
std::filesystem::path mock_script_path(const ProviderConfig& provider);

}  // namespace promptopt::llm
