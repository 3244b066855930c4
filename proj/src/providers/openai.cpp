#include "citing/providers/openai.hpp"

#include <algorithm>

#include <httplib.h>

#include "citing/error.hpp"

namespace citing {

namespace {

std::string post_json(const HttpEndpoint& ep, const ParsedBaseUrl& url, const std::string& route,
                      const Json& body) {
  httplib::Client client(url.origin);
  client.set_connection_timeout(ep.timeout);
  client.set_read_timeout(ep.timeout);
  client.set_write_timeout(ep.timeout);
  httplib::Headers headers;
  if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);
  auto res = client.Post(url.prefix + route, headers, dump_line(body), "application/json");
  if (!res) {
    throw ProviderError("request to " + url.origin + url.prefix + route +
                            " failed: " + httplib::to_string(res.error()),
                        true);
  }
  if (res->status < 200 || res->status >= 300) throw_http_error(res->status, res->body);
  return res->body;
}

Json parse_body(const std::string& body) {
  try {
    return Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw ProviderError(std::string("malformed response body: ") + e.what(), true);
  }
}

}  // namespace

ParsedBaseUrl parse_base_url(const std::string& api_base) {
  const auto scheme_end = api_base.find("://");
  if (scheme_end == std::string::npos) {
    throw DataError("api base \"" + api_base + "\" must start with http:// or https://");
  }
  const auto scheme = api_base.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw DataError("unsupported scheme in api base \"" + api_base + "\"");
  }
  const auto path_start = api_base.find('/', scheme_end + 3);
  ParsedBaseUrl out;
  out.origin = api_base.substr(0, path_start);
  if (path_start != std::string::npos) out.prefix = api_base.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

void throw_http_error(int status, const std::string& body) {
  std::string message = body;
  try {
    auto j = Json::parse(body);
    if (j.contains("error")) {
      const auto& err = j["error"];
      message = err.is_object() ? err.value("message", err.dump()) : err.dump();
    }
  } catch (const std::exception&) {
  }
  const bool retryable = status == 408 || status == 409 || status == 429 || status >= 500;
  throw ProviderError("HTTP " + std::to_string(status) + ": " + message, retryable, status);
}

OpenAiChatBackend::OpenAiChatBackend(HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)), url_(parse_base_url(endpoint_.api_base)) {}

std::string OpenAiChatBackend::complete(const ChatRequest& request) {
  request.validate();
  Json body;
  body["model"] = request.model_name;
  Json msgs = Json::array();
  for (const auto& m : request.messages) {
    msgs.push_back(Json{{"role", to_string(m.role)}, {"content", m.content}});
  }
  body["messages"] = std::move(msgs);
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_new_tokens;
  if (request.seed) body["seed"] = *request.seed;

  auto j = parse_body(post_json(endpoint_, url_, "/chat/completions", body));
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_null()) throw ProviderError("completion has null content", true);
    return content.get<std::string>();
  } catch (const Json::exception& e) {
    throw ProviderError(std::string("unexpected completion shape: ") + e.what(), true);
  }
}

OpenAiEmbeddingBackend::OpenAiEmbeddingBackend(HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)), url_(parse_base_url(endpoint_.api_base)) {}

std::vector<std::vector<double>> OpenAiEmbeddingBackend::embed(const std::string& model,
                                                               std::span<const std::string> texts) {
  Json body;
  body["model"] = model;
  body["input"] = Json(std::vector<std::string>(texts.begin(), texts.end()));
  auto j = parse_body(post_json(endpoint_, url_, "/embeddings", body));
  try {
    std::vector<std::pair<std::size_t, std::vector<double>>> rows;
    std::size_t pos = 0;
    for (const auto& item : j.at("data")) {
      const auto index = item.contains("index") ? item["index"].get<std::size_t>() : pos;
      rows.emplace_back(index, item.at("embedding").get<std::vector<double>>());
      ++pos;
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (auto& r : rows) out.push_back(std::move(r.second));
    return out;
  } catch (const Json::exception& e) {
    throw ProviderError(std::string("unexpected embeddings shape: ") + e.what(), true);
  }
}

}  // namespace citing
