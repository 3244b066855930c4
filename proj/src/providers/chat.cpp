#include "citing/providers/chat.hpp"

#include <cmath>

#include "citing/error.hpp"
#include "citing/providers/embedding.hpp"

namespace citing {

std::string to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role parse_role(const std::string& name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  throw DataError("unknown chat role \"" + name + "\"");
}

void ChatRequest::validate() const {
  if (messages.empty()) throw ProviderError("chat request has no messages", false);
  if (messages.back().role != Role::User) {
    throw ProviderError("chat request must end with a user message", false);
  }
  if (!(temperature >= 0.0)) throw ProviderError("temperature must be >= 0", false);
  if (max_new_tokens < 1) throw ProviderError("max_new_tokens must be >= 1", false);
}

const std::string& ChatRequest::last_user_content() const {
  validate();
  return messages.back().content;
}

ChatRequest ChatRequest::single_turn(std::string model, std::string prompt, double temperature,
                                     int max_new_tokens) {
  ChatRequest r;
  r.model_name = std::move(model);
  r.messages.push_back({Role::User, std::move(prompt)});
  r.temperature = temperature;
  r.max_new_tokens = max_new_tokens;
  return r;
}

Json request_to_json(const ChatRequest& request) {
  Json j;
  j["model"] = request.model_name;
  Json msgs = Json::array();
  for (const auto& m : request.messages) {
    msgs.push_back(Json{{"role", to_string(m.role)}, {"content", m.content}});
  }
  j["messages"] = std::move(msgs);
  j["temperature"] = request.temperature;
  j["max_new_tokens"] = request.max_new_tokens;
  j["seed"] = request.seed ? Json(*request.seed) : Json(nullptr);
  return j;
}

EmbeddingVector::EmbeddingVector(std::vector<double> values, bool reject_zero)
    : values_(std::move(values)) {
  if (values_.empty()) throw DataError("embedding has dimension 0");
  bool any_nonzero = false;
  for (double v : values_) {
    if (!std::isfinite(v)) throw DataError("embedding contains a non-finite value");
    any_nonzero = any_nonzero || v != 0.0;
  }
  if (reject_zero && !any_nonzero) throw DataError("embedding is the all-zero vector");
}

}  // namespace citing
