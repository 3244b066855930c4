#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "citing/error.hpp"
#include "citing/providers/cache.hpp"
#include "citing/providers/mock.hpp"
#include "citing/providers/openai.hpp"
#include "citing/providers/parallel.hpp"
#include "citing/providers/provider.hpp"
#include "helpers.hpp"

namespace citing {
namespace {

using testing::TempDir;

/// Local stand-in for an OpenAI-compatible server.
class StubServer {
 public:
  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post(R"(/v1/.*)", [handler](const httplib::Request& req, httplib::Response& res) { handler(req, res); });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(OpenAi, RetriesTransientFailuresAndLedgerCountsAttempts) {
  std::atomic<int> hits{0};
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    if (++hits <= 2) {
      res.status = 503;
      res.set_content(R"({"error":{"message":"busy"}})", "application/json");
      return;
    }
    const auto body = Json::parse(req.body);
    EXPECT_EQ(body["model"], "m");
    EXPECT_EQ(body["max_tokens"], 32);
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"hello"}}]})", "application/json");
  });
  auto ledger = std::make_shared<RunLedger>();
  auto backend = std::make_shared<OpenAiChatBackend>(HttpEndpoint{server.base(), "k", std::chrono::seconds(5)});
  ChatProvider provider(backend, testing::options_for("teacher", ledger));
  EXPECT_EQ(provider.chat(ChatRequest::single_turn("m", "hi", 0.0, 32)), "hello");
  EXPECT_EQ(hits.load(), 3);
  const auto events = ledger->events_of("chat");
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0]["attempts"], 3);
  EXPECT_EQ(events[0]["status"], "ok");
}

TEST(OpenAi, ClientErrorsSurfaceImmediately) {
  std::atomic<int> hits{0};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 400;
    res.set_content(R"({"error":{"message":"model not found"}})", "application/json");
  });
  auto backend = std::make_shared<OpenAiChatBackend>(HttpEndpoint{server.base(), "", std::chrono::seconds(5)});
  ChatProvider provider(backend, testing::options_for("teacher"));
  try {
    provider.chat(ChatRequest::single_turn("m", "hi", 0.0, 8));
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_FALSE(e.retryable());
    EXPECT_NE(std::string(e.what()).find("model not found"), std::string::npos);
  }
  EXPECT_EQ(hits.load(), 1);
}

TEST(OpenAi, EmbeddingsAreReorderedByIndex) {
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[{"index":1,"embedding":[0,1]},{"index":0,"embedding":[1,0]}]})",
                    "application/json");
  });
  auto backend = std::make_shared<OpenAiEmbeddingBackend>(HttpEndpoint{server.base(), "", std::chrono::seconds(5)});
  EmbeddingProvider provider(backend, "e", testing::options_for("embedder"));
  const std::vector<std::string> texts{"a", "b"};
  const auto v = provider.embed(texts);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0][0], 1.0);
  EXPECT_EQ(v[1][1], 1.0);
}

TEST(OpenAi, ExhaustedRetriesGiveUp) {
  StubServer server([&](const httplib::Request&, httplib::Response& res) { res.status = 429; });
  auto backend = std::make_shared<OpenAiChatBackend>(HttpEndpoint{server.base(), "", std::chrono::seconds(5)});
  auto options = testing::options_for("student");
  options.retry = testing::fast_retry(2);
  ChatProvider provider(backend, options);
  EXPECT_THROW(provider.chat(ChatRequest::single_turn("m", "hi", 0.0, 8)), ProviderError);
}

TEST(Cache, MissThenHitThenRepair) {
  TempDir dir;
  auto cache = std::make_shared<ResponseCache>(dir / "cache");
  auto ledger = std::make_shared<RunLedger>();
  auto backend = std::make_shared<FunctionChatBackend>("fn", [](const ChatRequest& r) { return "re:" + r.last_user_content(); });
  ChatProvider provider(backend, testing::options_for("teacher", ledger, cache));
  const auto req = ChatRequest::single_turn("m", "question", 0.0, 16);
  EXPECT_EQ(provider.chat(req), "re:question");
  EXPECT_EQ(provider.chat(req), "re:question");
  EXPECT_EQ(backend->calls(), 1u);

  const auto entry = cache->entry_path(chat_cache_key(backend->id(), req));
  ASSERT_TRUE(std::filesystem::exists(entry));
  std::ofstream(entry, std::ios::trunc) << "{not json";
  EXPECT_EQ(provider.chat(req), "re:question");
  EXPECT_EQ(backend->calls(), 2u);

  const auto events = ledger->events_of("chat");
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events[0]["cache"], "miss");
  EXPECT_EQ(events[1]["cache"], "hit");
  EXPECT_EQ(events[2]["cache"], "repaired");
}

TEST(Cache, KeyDependsOnEveryRequestField) {
  auto a = ChatRequest::single_turn("m", "p", 0.0, 16);
  auto b = a;
  b.temperature = 0.5;
  auto c = a;
  c.max_new_tokens = 17;
  EXPECT_NE(chat_cache_key("x", a), chat_cache_key("x", b));
  EXPECT_NE(chat_cache_key("x", a), chat_cache_key("x", c));
  EXPECT_NE(chat_cache_key("x", a), chat_cache_key("y", a));
  EXPECT_EQ(chat_cache_key("x", a), chat_cache_key("x", ChatRequest::single_turn("m", "p", 0.0, 16)));
}

TEST(Ledger, ParallelEventsReleasedInIndexOrder) {
  auto ledger = std::make_shared<RunLedger>();
  auto provider = testing::fn_provider([](const ChatRequest& r) {
    std::this_thread::sleep_for(std::chrono::milliseconds(std::hash<std::string>{}(r.last_user_content()) % 5));
    return r.last_user_content();
  }, "student", ledger);
  std::vector<std::string> out(40);
  ordered_parallel_for(out.size(), 8, ledger.get(), [&](std::size_t i) {
    out[i] = provider->chat(ChatRequest::single_turn("m", "p" + std::to_string(i), 0.0, 8));
  });
  const auto events = ledger->events();
  ASSERT_EQ(events.size(), 40u);
  for (std::size_t i = 0; i < events.size(); ++i) {
    EXPECT_EQ(events[i]["seq"], i);
    EXPECT_EQ(events[i]["request"]["messages"][0]["content"], "p" + std::to_string(i));
    EXPECT_EQ(out[i], "p" + std::to_string(i));
  }
}

TEST(Ledger, FileContinuesSequence) {
  TempDir dir;
  {
    RunLedger l(dir / "l.jsonl");
    l.record(Json{{"event", "a"}});
    l.record(Json{{"event", "b"}});
  }
  RunLedger l(dir / "l.jsonl");
  l.record(Json{{"event", "c"}});
  const auto lines = read_jsonl_file(dir / "l.jsonl");
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[2]["seq"], 2);
  EXPECT_TRUE(lines[2].contains("ts"));
}

TEST(Mocks, ScriptedUnknownPromptFails) {
  ScriptedChatBackend backend(std::map<std::string, std::string>{{"a", "b"}});
  EXPECT_EQ(backend.complete(ChatRequest::single_turn("m", "a", 0, 8)), "b");
  EXPECT_THROW(backend.complete(ChatRequest::single_turn("m", "zzz", 0, 8)), ProviderError);
}

TEST(Mocks, RulesExtractFieldAndAppendSuffix) {
  RuleChatBackend backend({MockRule{"revise", std::nullopt, "Response: ", "\nCriteria:", " [REV]"}});
  const auto out = backend.complete(ChatRequest::single_turn("m", "please revise\nResponse: abc\nCriteria: c", 0, 8));
  EXPECT_EQ(out, "abc [REV]");
}

TEST(Mocks, EmbeddingsAreDeterministicUnitVectors) {
  const auto a = MockEmbeddingBackend::vector_for("hello", 48);
  const auto b = MockEmbeddingBackend::vector_for("hello", 48);
  const auto c = MockEmbeddingBackend::vector_for("world", 48);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  double norm = 0;
  for (double x : a) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-12);
}

TEST(Mocks, TeacherAnswersClassificationPrompts) {
  const auto reply = MockTeacherBackend::classification_reply("x\nGiven instructions:\n1. a\n2. b\n3. c\n4. d\n\nAnswer");
  EXPECT_NE(reply.find("Members: 1, 4"), std::string::npos) << reply;
  EXPECT_NE(reply.find("Category 3:"), std::string::npos);
}

TEST(EmbeddingProvider, BatchesAndCaches) {
  TempDir dir;
  auto cache = std::make_shared<ResponseCache>(dir / "cache");
  auto backend = std::make_shared<MockEmbeddingBackend>(8);
  EmbeddingProvider provider(backend, "e", testing::options_for("embedder", nullptr, cache), 2);
  const std::vector<std::string> texts{"a", "b", "c", "d", "e"};
  const auto first = provider.embed(texts);
  EXPECT_EQ(backend->calls(), 3u);
  const auto second = provider.embed(texts);
  EXPECT_EQ(backend->calls(), 3u);
  EXPECT_EQ(first, second);
  EXPECT_EQ(first[4].dimension(), 8u);
}

TEST(EmbeddingProvider, RejectsZeroVectors) {
  class Zero : public EmbeddingBackend {
   public:
    std::string id() const override { return "zero"; }
    std::vector<std::vector<double>> embed(const std::string&, std::span<const std::string> t) override {
      return std::vector<std::vector<double>>(t.size(), std::vector<double>(4, 0.0));
    }
  };
  EmbeddingProvider provider(std::make_shared<Zero>(), "e", testing::options_for("embedder"));
  EXPECT_THROW(provider.embed_one("x"), Error);
}

}  // namespace
}  // namespace citing
