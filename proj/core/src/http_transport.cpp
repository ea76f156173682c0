// Live chat-completions transport over cpp-httplib. Kept in its own
// translation unit so the header-only HTTP stack compiles exactly once.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include "promptopt/gateway.hpp"

namespace promptopt::llm {

namespace {

// Splits "https://host:port/prefix" into the client origin and the path
// prefix that precedes /chat/completions.
void split_base_url(const std::string& base_url, std::string& origin, std::string& prefix) {
  const auto scheme_end = base_url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = base_url.find('/', host_start);
  if (path_start == std::string::npos) {
    origin = base_url;
    prefix.clear();
    return;
  }
  origin = base_url.substr(0, path_start);
  prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
}

class HttpTransport : public Transport {
 public:
  HttpResult post_chat(const nlohmann::json& request_body,
                       const ProviderConfig& provider) override {
    std::string origin;
    std::string prefix;
    split_base_url(provider.base_url, origin, prefix);

    httplib::Client client(origin);
    client.set_connection_timeout(std::chrono::milliseconds(provider.request_timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(provider.request_timeout_ms));
    client.set_write_timeout(std::chrono::milliseconds(provider.request_timeout_ms));
    client.set_follow_location(true);

    httplib::Headers headers;
    if (!provider.api_key_env_var.empty()) {
      if (const char* key = std::getenv(provider.api_key_env_var.c_str())) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
      }
    }

    const std::string path = prefix + "/chat/completions";
    auto res = client.Post(path, headers, request_body.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      const char* label = err == httplib::Error::ConnectionTimeout ||
                                  err == httplib::Error::Read || err == httplib::Error::Write
                              ? "timeout: "
                              : "transport: ";
      return HttpResult{0, "", label + httplib::to_string(err)};
    }
    return HttpResult{res->status, res->body, ""};
  }
};

}  // namespace

std::shared_ptr<Transport> make_http_transport() {
  return std::make_shared<HttpTransport>();
}

}  // namespace promptopt::llm
