#include "citing/providers/provider.hpp"

#include "citing/error.hpp"

namespace citing {

namespace {

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

std::ptrdiff_t slots(std::size_t n) { return static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, n)); }

}  // namespace

ChatProvider::ChatProvider(std::shared_ptr<ChatBackend> backend, ProviderOptions options)
    : backend_(std::move(backend)),
      backend_id_(backend_->id()),
      options_(std::move(options)),
      in_flight_(std::make_unique<std::counting_semaphore<>>(slots(options_.max_in_flight))) {}

std::string ChatProvider::chat(const ChatRequest& request) const {
  request.validate();
  const auto key = chat_cache_key(backend_id_, request);
  Json meta = request_to_json(request);
  int attempts = 0;
  CacheOutcome outcome;
  Json event;
  event["event"] = "chat";
  event["role"] = options_.role;
  event["backend"] = backend_id_;
  event["model"] = request.model_name;
  event["key"] = key;
  try {
    outcome = cache_lookup_or_call(options_.cache.get(), key, meta, [&]() -> Json {
      SemaphoreGuard guard(*in_flight_);
      return with_retries(options_.retry, attempts, [&] { return backend_->complete(request); });
    });
  } catch (const std::exception& e) {
    if (options_.ledger) {
      event["cache"] = options_.cache ? "miss" : "off";
      event["attempts"] = attempts;
      event["status"] = "error";
      event["request"] = std::move(meta);
      event["error"] = e.what();
      options_.ledger->record(std::move(event));
    }
    throw;
  }
  if (!outcome.response.is_string()) {
    throw ProviderError("cached chat response " + key + " is not text", false);
  }
  if (options_.ledger) {
    if (outcome.warning) {
      options_.ledger->record(Json{{"event", "warning"}, {"message", *outcome.warning}});
    }
    event["cache"] = to_string(outcome.status);
    event["attempts"] = attempts;
    event["status"] = "ok";
    event["request"] = std::move(meta);
    event["response"] = outcome.response;
    options_.ledger->record(std::move(event));
  }
  return outcome.response.get<std::string>();
}

EmbeddingProvider::EmbeddingProvider(std::shared_ptr<EmbeddingBackend> backend, std::string model,
                                     ProviderOptions options, std::size_t batch_size)
    : backend_(std::move(backend)),
      backend_id_(backend_->id()),
      model_(std::move(model)),
      options_(std::move(options)),
      batch_size_(std::max<std::size_t>(1, batch_size)),
      in_flight_(std::make_unique<std::counting_semaphore<>>(slots(options_.max_in_flight))) {}

std::vector<std::vector<double>> EmbeddingProvider::embed_batch(
    std::span<const std::string> texts) const {
  const auto key = embedding_cache_key(backend_id_, model_, texts);
  Json meta;
  meta["model"] = model_;
  meta["texts"] = Json(std::vector<std::string>(texts.begin(), texts.end()));
  int attempts = 0;
  Json event;
  event["event"] = "embed";
  event["role"] = options_.role;
  event["backend"] = backend_id_;
  event["model"] = model_;
  event["key"] = key;
  event["count"] = texts.size();
  CacheOutcome outcome;
  try {
    outcome = cache_lookup_or_call(options_.cache.get(), key, meta, [&]() -> Json {
      SemaphoreGuard guard(*in_flight_);
      auto vectors = with_retries(options_.retry, attempts, [&] { return backend_->embed(model_, texts); });
      if (vectors.size() != texts.size()) {
        throw ProviderError("embedding backend returned " + std::to_string(vectors.size()) +
                                " vectors for " + std::to_string(texts.size()) + " texts",
                            false);
      }
      return Json(vectors);
    });
  } catch (const std::exception& e) {
    if (options_.ledger) {
      event["cache"] = options_.cache ? "miss" : "off";
      event["attempts"] = attempts;
      event["status"] = "error";
      event["texts"] = meta["texts"];
      event["error"] = e.what();
      options_.ledger->record(std::move(event));
    }
    throw;
  }
  std::vector<std::vector<double>> out;
  try {
    out = outcome.response.get<std::vector<std::vector<double>>>();
  } catch (const std::exception&) {
    throw ProviderError("cached embedding response " + key + " is malformed", false);
  }
  if (options_.ledger) {
    if (outcome.warning) {
      options_.ledger->record(Json{{"event", "warning"}, {"message", *outcome.warning}});
    }
    event["cache"] = to_string(outcome.status);
    event["attempts"] = attempts;
    event["status"] = "ok";
    event["texts"] = meta["texts"];
    event["dimension"] = out.empty() ? 0 : out.front().size();
    options_.ledger->record(std::move(event));
  }
  return out;
}

std::vector<EmbeddingVector> EmbeddingProvider::embed(std::span<const std::string> texts) const {
  if (texts.empty()) throw ProviderError("embed called with no texts", false);
  for (const auto& t : texts) {
    if (t.empty()) throw ProviderError("embed called with an empty text", false);
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
    const auto len = std::min(batch_size_, texts.size() - start);
    for (auto& v : embed_batch(texts.subspan(start, len))) {
      EmbeddingVector vec;
      try {
        vec = EmbeddingVector(std::move(v));
      } catch (const DataError& e) {
        throw ProviderError(std::string("embedding provider returned an invalid vector: ") + e.what(), false);
      }
      if (!out.empty() && vec.dimension() != out.front().dimension()) {
        throw ProviderError("embedding dimension mismatch: " + std::to_string(vec.dimension()) +
                                " vs " + std::to_string(out.front().dimension()),
                            false);
      }
      out.push_back(std::move(vec));
    }
  }
  return out;
}

EmbeddingVector EmbeddingProvider::embed_one(const std::string& text) const {
  std::vector<std::string> one{text};
  return std::move(embed(one).front());
}

}  // namespace citing
