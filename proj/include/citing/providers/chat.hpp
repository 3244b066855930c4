#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "citing/json_io.hpp"

namespace citing {

enum class Role { System, User, Assistant };

std::string to_string(Role role);
Role parse_role(const std::string& name);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model_name;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_new_tokens = 512;
  std::optional<std::uint64_t> seed;

  /// Non-empty messages, last one from the user, temperature >= 0, tokens >= 1.
  void validate() const;
  const std::string& last_user_content() const;

  static ChatRequest single_turn(std::string model, std::string prompt, double temperature,
                                 int max_new_tokens);
};

/// Fields that identify a request for caching and auditing, in a fixed order.
Json request_to_json(const ChatRequest& request);

/// One upstream attempt. Implementations are safe to call concurrently and
/// throw ProviderError to signal failure.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string id() const = 0;
  virtual std::string complete(const ChatRequest& request) = 0;
};

}  // namespace citing
