#pragma once

#include <memory>

#include "citing/config.hpp"
#include "citing/providers/provider.hpp"

namespace citing {

std::shared_ptr<ChatBackend> make_chat_backend(const ProviderConfig& config, const std::string& role);
std::shared_ptr<EmbeddingBackend> make_embedding_backend(const ProviderConfig& config);

/// The four handles of a run, sharing one ledger and one cache.
struct ProviderSet {
  std::shared_ptr<RunLedger> ledger;
  std::shared_ptr<const ResponseCache> cache;
  std::shared_ptr<ChatProvider> teacher;
  std::shared_ptr<ChatProvider> student;
  std::shared_ptr<ChatProvider> judge;
  std::shared_ptr<EmbeddingProvider> embedder;
};

ProviderSet make_providers(const PipelineConfig& config, std::shared_ptr<RunLedger> ledger);

}  // namespace citing
