#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>

#include "citing/providers/factory.hpp"
#include "citing/providers/mock.hpp"
#include "citing/records.hpp"

namespace citing::testing {

inline std::filesystem::path data_dir() { return CITING_TEST_DATA_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (;;) {
      path_ = base / ("citing-test-" + std::to_string(rd()) + std::to_string(rd()));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline RetryPolicy fast_retry(int attempts = 4) {
  RetryPolicy p;
  p.max_attempts = attempts;
  p.base_delay = std::chrono::milliseconds(1);
  p.max_delay = std::chrono::milliseconds(2);
  return p;
}

inline ProviderOptions options_for(const std::string& role, std::shared_ptr<RunLedger> ledger = nullptr,
                                   std::shared_ptr<const ResponseCache> cache = nullptr) {
  ProviderOptions o;
  o.role = role;
  o.retry = fast_retry();
  o.ledger = std::move(ledger);
  o.cache = std::move(cache);
  return o;
}

inline std::shared_ptr<ChatProvider> chat_provider(std::shared_ptr<ChatBackend> backend, const std::string& role,
                                                   std::shared_ptr<RunLedger> ledger = nullptr) {
  return std::make_shared<ChatProvider>(std::move(backend), options_for(role, std::move(ledger)));
}

inline std::shared_ptr<ChatProvider> fn_provider(FunctionChatBackend::Fn fn, const std::string& role = "test",
                                                 std::shared_ptr<RunLedger> ledger = nullptr) {
  return chat_provider(std::make_shared<FunctionChatBackend>("fn-" + role, std::move(fn)), role, std::move(ledger));
}

inline std::shared_ptr<EmbeddingProvider> mock_embedder(std::size_t dimension = 32,
                                                        std::shared_ptr<RunLedger> ledger = nullptr) {
  return std::make_shared<EmbeddingProvider>(std::make_shared<MockEmbeddingBackend>(dimension), "embedder",
                                             options_for("embedder", std::move(ledger)));
}

/// Provider set with explicit backends sharing one ledger.
inline ProviderSet provider_set(std::shared_ptr<RunLedger> ledger, std::shared_ptr<ChatBackend> teacher,
                                std::shared_ptr<ChatBackend> student, std::shared_ptr<ChatBackend> judge,
                                std::size_t dimension = 32) {
  ProviderSet set;
  set.ledger = ledger;
  set.teacher = chat_provider(std::move(teacher), "teacher", ledger);
  set.student = chat_provider(std::move(student), "student", ledger);
  set.judge = chat_provider(std::move(judge), "judge", ledger);
  set.embedder = mock_embedder(dimension, ledger);
  return set;
}

inline InstructionRecord make_record(std::string id, std::string instruction,
                                     std::optional<std::string> reference = std::nullopt) {
  InstructionRecord r;
  r.id = std::move(id);
  r.instruction = std::move(instruction);
  r.reference_response = std::move(reference);
  return r;
}

}  // namespace citing::testing
