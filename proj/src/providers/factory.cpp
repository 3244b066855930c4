#include "citing/providers/factory.hpp"

#include "citing/error.hpp"
#include "citing/providers/mock.hpp"
#include "citing/providers/openai.hpp"

namespace citing {

namespace {

HttpEndpoint endpoint_for(const ProviderConfig& config, const std::string& role) {
  if (config.api_base.empty()) {
    throw DataError(role + " provider uses the openai backend but has no api_base "
                           "(set it in the config or CITING_API_BASE)");
  }
  return HttpEndpoint{config.api_base, config.api_key, std::chrono::seconds(config.timeout_seconds)};
}

}  // namespace

std::shared_ptr<ChatBackend> make_chat_backend(const ProviderConfig& config, const std::string& role) {
  if (config.backend == "openai") return std::make_shared<OpenAiChatBackend>(endpoint_for(config, role));
  if (config.mock.mode == "scripted") return std::make_shared<ScriptedChatBackend>(config.mock.script);
  std::shared_ptr<ChatBackend> generative;
  if (role == "judge") {
    generative = std::make_shared<GenerativeJudgeBackend>();
  } else if (role == "teacher") {
    generative = std::make_shared<MockTeacherBackend>();
  } else {
    generative = std::make_shared<GenerativeChatBackend>();
  }
  if (config.mock.mode == "rules") return std::make_shared<RuleChatBackend>(config.mock.rules, "mock-rules", generative);
  return generative;
}

std::shared_ptr<EmbeddingBackend> make_embedding_backend(const ProviderConfig& config) {
  if (config.backend == "openai") {
    return std::make_shared<OpenAiEmbeddingBackend>(endpoint_for(config, "embedder"));
  }
  return std::make_shared<MockEmbeddingBackend>(config.mock.dimension);
}

ProviderSet make_providers(const PipelineConfig& config, std::shared_ptr<RunLedger> ledger) {
  ProviderSet set;
  set.ledger = std::move(ledger);
  if (config.cache_dir) set.cache = std::make_shared<ResponseCache>(config.resolve(*config.cache_dir));
  auto options = [&](const std::string& role) {
    ProviderOptions o;
    o.role = role;
    o.retry = config.retry;
    o.cache = set.cache;
    o.ledger = set.ledger;
    o.max_in_flight = config.max_parallel_calls;
    return o;
  };
  set.teacher = std::make_shared<ChatProvider>(make_chat_backend(config.teacher, "teacher"), options("teacher"));
  set.student = std::make_shared<ChatProvider>(make_chat_backend(config.student, "student"), options("student"));
  set.judge = std::make_shared<ChatProvider>(make_chat_backend(config.judge, "judge"), options("judge"));
  set.embedder = std::make_shared<EmbeddingProvider>(make_embedding_backend(config.embedder),
                                                     config.embedder.model, options("embedder"),
                                                     config.embedder.batch_size);
  return set;
}

}  // namespace citing
