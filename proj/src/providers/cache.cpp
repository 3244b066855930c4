#include "citing/providers/cache.hpp"

#include <system_error>

#include "citing/digest.hpp"
#include "citing/error.hpp"

namespace citing {

namespace fs = std::filesystem;

std::string to_string(CacheStatus status) {
  switch (status) {
    case CacheStatus::Disabled: return "off";
    case CacheStatus::Hit: return "hit";
    case CacheStatus::Miss: return "miss";
    case CacheStatus::Repaired: return "repaired";
  }
  return "off";
}

ResponseCache::ResponseCache(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

fs::path ResponseCache::entry_path(const std::string& key) const {
  return root_ / key.substr(0, 2) / (key + ".json");
}

std::optional<Json> ResponseCache::load(const std::string& key, bool& corrupt) const {
  corrupt = false;
  const auto path = entry_path(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  try {
    auto j = Json::parse(read_text_file(path));
    if (!j.is_object() || j.value("key", std::string()) != key || !j.contains("response")) {
      corrupt = true;
      return std::nullopt;
    }
    return j;
  } catch (const std::exception&) {
    corrupt = true;
    return std::nullopt;
  }
}

void ResponseCache::store(const std::string& key, const Json& entry) const {
  write_file_atomic(entry_path(key), dump_line(entry) + "\n");
}

std::string chat_cache_key(const std::string& backend_id, const ChatRequest& request) {
  Json material;
  material["kind"] = "chat";
  material["backend"] = backend_id;
  material["request"] = request_to_json(request);
  return sha256_hex(dump_line(material));
}

std::string embedding_cache_key(const std::string& backend_id, const std::string& model,
                                std::span<const std::string> texts) {
  Json material;
  material["kind"] = "embed";
  material["backend"] = backend_id;
  material["model"] = model;
  material["texts"] = Json(std::vector<std::string>(texts.begin(), texts.end()));
  return sha256_hex(dump_line(material));
}

CacheOutcome cache_lookup_or_call(const ResponseCache* cache, const std::string& key,
                                  const Json& request_metadata,
                                  const std::function<Json()>& call) {
  CacheOutcome out;
  if (cache == nullptr) {
    out.response = call();
    out.status = CacheStatus::Disabled;
    return out;
  }
  bool corrupt = false;
  if (auto hit = cache->load(key, corrupt)) {
    out.response = std::move((*hit)["response"]);
    out.status = CacheStatus::Hit;
    return out;
  }
  out.response = call();
  out.status = corrupt ? CacheStatus::Repaired : CacheStatus::Miss;
  if (corrupt) out.warning = "corrupt cache entry " + key + " replaced";
  Json entry;
  entry["key"] = key;
  entry["request"] = request_metadata;
  entry["response"] = out.response;
  cache->store(key, entry);
  return out;
}

}  // namespace citing
