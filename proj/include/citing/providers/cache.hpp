#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "citing/json_io.hpp"
#include "citing/providers/chat.hpp"

namespace citing {

enum class CacheStatus { Disabled, Hit, Miss, Repaired };

std::string to_string(CacheStatus status);

/// Content-addressed response store: one JSON file per key under
/// `<root>/<key[0:2]>/<key>.json`, written via rename so concurrent readers
/// and writers never observe partial entries.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path entry_path(const std::string& key) const;

  /// Returns the stored entry object. A missing file yields nullopt; an
  /// unreadable or mismatched entry yields nullopt and sets `corrupt`.
  std::optional<Json> load(const std::string& key, bool& corrupt) const;
  void store(const std::string& key, const Json& entry) const;

 private:
  std::filesystem::path root_;
};

std::string chat_cache_key(const std::string& backend_id, const ChatRequest& request);
std::string embedding_cache_key(const std::string& backend_id, const std::string& model,
                                std::span<const std::string> texts);

struct CacheOutcome {
  Json response;
  CacheStatus status = CacheStatus::Disabled;
  std::optional<std::string> warning;
};

/// Hit: returns the stored response without calling upstream. Miss: calls
/// upstream, stores `{key, request, response}`, returns the response. A corrupt
/// entry counts as a miss, is overwritten, and produces a warning.
CacheOutcome cache_lookup_or_call(const ResponseCache* cache, const std::string& key,
                                  const Json& request_metadata,
                                  const std::function<Json()>& call);

}  // namespace citing
