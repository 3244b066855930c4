#pragma once

#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include "citing/providers/cache.hpp"
#include "citing/providers/chat.hpp"
#include "citing/providers/embedding.hpp"
#include "citing/providers/ledger.hpp"
#include "citing/providers/retry.hpp"

namespace citing {

struct ProviderOptions {
  /// Label written to the ledger ("teacher", "student", ...).
  std::string role;
  RetryPolicy retry;
  std::shared_ptr<const ResponseCache> cache;
  std::shared_ptr<RunLedger> ledger;
  /// Upper bound on concurrent upstream calls through this handle.
  std::size_t max_in_flight = 4;
};

/// Shareable chat handle: cache, then retries around one backend attempt.
/// Every call is recorded in the ledger with attempt count and cache status.
class ChatProvider {
 public:
  ChatProvider(std::shared_ptr<ChatBackend> backend, ProviderOptions options);

  std::string chat(const ChatRequest& request) const;

  const std::string& backend_id() const { return backend_id_; }
  const ProviderOptions& options() const { return options_; }
  RunLedger* ledger() const { return options_.ledger.get(); }

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::string backend_id_;
  ProviderOptions options_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

class EmbeddingProvider {
 public:
  EmbeddingProvider(std::shared_ptr<EmbeddingBackend> backend, std::string model,
                    ProviderOptions options, std::size_t batch_size = 64);

  /// One vector per text, order-aligned, all of one dimension.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const;
  EmbeddingVector embed_one(const std::string& text) const;

  const std::string& backend_id() const { return backend_id_; }
  const std::string& model() const { return model_; }
  RunLedger* ledger() const { return options_.ledger.get(); }

 private:
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) const;

  std::shared_ptr<EmbeddingBackend> backend_;
  std::string backend_id_;
  std::string model_;
  ProviderOptions options_;
  std::size_t batch_size_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

}  // namespace citing
