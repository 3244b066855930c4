#pragma once

#include <chrono>
#include <string>

#include "citing/providers/chat.hpp"
#include "citing/providers/embedding.hpp"

namespace citing {

/// OpenAI-compatible server: `<base>/chat/completions` and `<base>/embeddings`.
struct HttpEndpoint {
  /// e.g. "https://api.openai.com/v1" or "http://127.0.0.1:8000/v1".
  std::string api_base;
  std::string api_key;
  std::chrono::seconds timeout{120};
};

/// Splits "scheme://host[:port][/prefix]" into origin and path prefix.
struct ParsedBaseUrl {
  std::string origin;
  std::string prefix;
};
ParsedBaseUrl parse_base_url(const std::string& api_base);

/// Maps an HTTP status to a ProviderError: 408/409/429/5xx are retryable,
/// other non-2xx statuses are surfaced immediately with the upstream message.
[[noreturn]] void throw_http_error(int status, const std::string& body);

class OpenAiChatBackend : public ChatBackend {
 public:
  explicit OpenAiChatBackend(HttpEndpoint endpoint);
  std::string id() const override { return "openai:" + endpoint_.api_base; }
  std::string complete(const ChatRequest& request) override;

 private:
  HttpEndpoint endpoint_;
  ParsedBaseUrl url_;
};

class OpenAiEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit OpenAiEmbeddingBackend(HttpEndpoint endpoint);
  std::string id() const override { return "openai:" + endpoint_.api_base; }
  std::vector<std::vector<double>> embed(const std::string& model,
                                         std::span<const std::string> texts) override;

 private:
  HttpEndpoint endpoint_;
  ParsedBaseUrl url_;
};

}  // namespace citing
