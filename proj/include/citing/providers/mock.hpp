#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "citing/providers/chat.hpp"
#include "citing/providers/embedding.hpp"

namespace citing {

/// Exact prompt -> response table keyed on the last user message.
/// A prompt missing from the table is a non-retryable error.
class ScriptedChatBackend : public ChatBackend {
 public:
  explicit ScriptedChatBackend(std::map<std::string, std::string> script,
                               std::string id = "mock-scripted");
  std::string id() const override { return id_; }
  std::string complete(const ChatRequest& request) override;
  std::size_t calls() const { return calls_; }

 private:
  std::map<std::string, std::string> script_;
  std::string id_;
  std::atomic<std::size_t> calls_{0};
};

/// Deterministic pseudo-text derived from a digest of the full request.
class GenerativeChatBackend : public ChatBackend {
 public:
  explicit GenerativeChatBackend(std::string id = "mock-generative") : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  std::string complete(const ChatRequest& request) override;

  static std::string text_for(const ChatRequest& request);

 private:
  std::string id_;
};

/// Generative text followed by a digest-chosen final verdict (1, 2 or tie),
/// so an offline judge always answers in a parseable form.
class GenerativeJudgeBackend : public ChatBackend {
 public:
  explicit GenerativeJudgeBackend(std::string id = "mock-judge") : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  std::string complete(const ChatRequest& request) override;

 private:
  std::string id_;
};

/// Offline teacher. A classification request (a prompt holding a
/// "Given instructions:" list) gets up to three fixed categories whose members
/// are the listed ordinals dealt round-robin; anything else gets generative text.
class MockTeacherBackend : public ChatBackend {
 public:
  explicit MockTeacherBackend(std::string id = "mock-teacher") : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  std::string complete(const ChatRequest& request) override;

  static std::string classification_reply(const std::string& prompt);

 private:
  std::string id_;
};

/// One substring-triggered behaviour of RuleChatBackend. Either returns
/// `reply` verbatim, or extracts the text between `field_after` and
/// `field_before` in the prompt and returns it with `suffix` appended.
struct MockRule {
  std::string contains;
  std::optional<std::string> reply;
  std::string field_after;
  std::string field_before;
  std::string suffix;
};

/// First matching rule wins; no match goes to `fallback` (generative text
/// when none is given).
class RuleChatBackend : public ChatBackend {
 public:
  explicit RuleChatBackend(std::vector<MockRule> rules, std::string id = "mock-rules",
                           std::shared_ptr<ChatBackend> fallback = nullptr);
  std::string id() const override { return id_; }
  std::string complete(const ChatRequest& request) override;

 private:
  std::vector<MockRule> rules_;
  std::string id_;
  std::shared_ptr<ChatBackend> fallback_;
};

/// Adapts a callable; used by tests to script arbitrary behaviour.
class FunctionChatBackend : public ChatBackend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  FunctionChatBackend(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string id() const override { return id_; }
  std::string complete(const ChatRequest& request) override {
    ++calls_;
    return fn_(request);
  }
  std::size_t calls() const { return calls_; }

 private:
  std::string id_;
  Fn fn_;
  std::atomic<std::size_t> calls_{0};
};

/// Deterministic unit-norm vectors from a SHA-256 stream over the text.
class MockEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit MockEmbeddingBackend(std::size_t dimension = 64, std::string id = "mock-embed");
  std::string id() const override { return id_; }
  std::vector<std::vector<double>> embed(const std::string& model,
                                         std::span<const std::string> texts) override;

  static std::vector<double> vector_for(const std::string& text, std::size_t dimension);
  std::size_t calls() const { return calls_; }

 private:
  std::size_t dimension_;
  std::string id_;
  std::atomic<std::size_t> calls_{0};
};

/// Text between the first `after` and the following `before` (or end of text).
std::optional<std::string> extract_between(const std::string& text, const std::string& after,
                                           const std::string& before);

}  // namespace citing
