#include "citing/providers/mock.hpp"

#include <cmath>
#include <cctype>
#include <cstring>

#include "citing/digest.hpp"
#include "citing/error.hpp"

namespace citing {

namespace {

constexpr const char* kLexicon[] = {
    "the",     "answer",  "is",      "clear",   "because", "each",     "step",    "follows",
    "from",    "a",       "careful", "reading", "of",      "request",  "and",     "simple",
    "facts",   "support", "it",      "while",   "detail",  "matters",  "here",    "we",
    "note",    "that",    "context", "shapes",  "every",   "response", "so",      "results",
    "remain",  "useful",  "precise", "brief",   "overall", "ideas",    "examples", "show",
    "how",     "this",    "works",   "in",      "practice", "with",    "good",    "reasons"};
constexpr std::size_t kLexiconSize = sizeof(kLexicon) / sizeof(kLexicon[0]);

std::uint64_t load_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

ScriptedChatBackend::ScriptedChatBackend(std::map<std::string, std::string> script, std::string id)
    : script_(std::move(script)), id_(std::move(id)) {}

std::string ScriptedChatBackend::complete(const ChatRequest& request) {
  ++calls_;
  const auto& prompt = request.last_user_content();
  auto it = script_.find(prompt);
  if (it == script_.end()) {
    throw ProviderError("scripted mock has no response for prompt: " + prompt.substr(0, 80), false);
  }
  return it->second;
}

std::string GenerativeChatBackend::text_for(const ChatRequest& request) {
  const auto digest = sha256(dump_line(request_to_json(request)));
  const std::size_t words = 8 + digest[0] % 9;
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (!out.empty()) out += ' ';
    out += kLexicon[digest[1 + i] % kLexiconSize];
  }
  static constexpr char kHex[] = "0123456789abcdef";
  out += " (";
  for (int i = 28; i < 32; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  out += ")";
  return out;
}

std::string GenerativeChatBackend::complete(const ChatRequest& request) {
  request.validate();
  return text_for(request);
}

std::string GenerativeJudgeBackend::complete(const ChatRequest& request) {
  request.validate();
  static constexpr const char* kVerdicts[] = {"1", "2", "tie"};
  const auto digest = sha256(request.last_user_content());
  return GenerativeChatBackend::text_for(request) + ". Verdict: " + kVerdicts[digest[0] % 3];
}

std::optional<std::string> extract_between(const std::string& text, const std::string& after,
                                           const std::string& before) {
  auto start = text.find(after);
  if (start == std::string::npos) return std::nullopt;
  start += after.size();
  auto end = before.empty() ? std::string::npos : text.find(before, start);
  return text.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

RuleChatBackend::RuleChatBackend(std::vector<MockRule> rules, std::string id,
                                 std::shared_ptr<ChatBackend> fallback)
    : rules_(std::move(rules)), id_(std::move(id)), fallback_(std::move(fallback)) {}

std::string RuleChatBackend::complete(const ChatRequest& request) {
  const auto& prompt = request.last_user_content();
  for (const auto& rule : rules_) {
    if (prompt.find(rule.contains) == std::string::npos) continue;
    if (rule.reply) return *rule.reply;
    auto field = extract_between(prompt, rule.field_after, rule.field_before);
    if (!field) continue;
    return *field + rule.suffix;
  }
  if (fallback_) return fallback_->complete(request);
  return GenerativeChatBackend::text_for(request);
}

std::string MockTeacherBackend::classification_reply(const std::string& prompt) {
  static constexpr std::pair<const char*, const char*> kCategories[] = {
      {"Open-ended writing", "Good responses are original and stay within the requested form and length."},
      {"Factual questions", "Good responses state correct facts plainly; bad responses guess or pad."},
      {"Step-by-step tasks", "Good responses give ordered, complete steps that a reader can follow."}};
  std::vector<int> ordinals;
  const auto start = prompt.find("Given instructions:");
  std::size_t pos = start == std::string::npos ? prompt.size() : prompt.find('\n', start);
  while (pos != std::string::npos && pos < prompt.size()) {
    const auto line_start = pos + 1;
    const auto line_end = prompt.find('\n', line_start);
    const auto line = prompt.substr(line_start, line_end == std::string::npos ? std::string::npos : line_end - line_start);
    std::size_t digits = 0;
    while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
    if (digits == 0 || digits >= line.size() || line[digits] != '.') break;
    ordinals.push_back(std::stoi(line.substr(0, digits)));
    pos = line_end;
  }
  const std::size_t m = std::min<std::size_t>(3, ordinals.size());
  std::string out;
  for (std::size_t c = 0; c < m; ++c) {
    std::string members;
    for (std::size_t i = c; i < ordinals.size(); i += m) {
      if (!members.empty()) members += ", ";
      members += std::to_string(ordinals[i]);
    }
    out += "Category " + std::to_string(c + 1) + ": " + kCategories[c].first + "\n";
    out += std::string("Criteria: ") + kCategories[c].second + "\n";
    out += "Members: " + members + "\n\n";
  }
  return out;
}

std::string MockTeacherBackend::complete(const ChatRequest& request) {
  request.validate();
  const auto& prompt = request.last_user_content();
  if (prompt.find("Given instructions:") != std::string::npos) return classification_reply(prompt);
  return GenerativeChatBackend::text_for(request);
}

MockEmbeddingBackend::MockEmbeddingBackend(std::size_t dimension, std::string id)
    : dimension_(dimension), id_(std::move(id)) {
  if (dimension_ == 0) throw DataError("mock embedding dimension must be >= 1");
}

std::vector<double> MockEmbeddingBackend::vector_for(const std::string& text, std::size_t dimension) {
  std::vector<double> v;
  v.reserve(dimension);
  std::uint64_t block = 0;
  while (v.size() < dimension) {
    const auto d = sha256(text + '\x1f' + std::to_string(block++));
    for (int k = 0; k < 4 && v.size() < dimension; ++k) {
      const auto bits = load_u64(d.data() + 8 * k) >> 11;
      v.push_back(static_cast<double>(bits) * 0x1.0p-52 - 1.0);
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

std::vector<std::vector<double>> MockEmbeddingBackend::embed(const std::string&,
                                                             std::span<const std::string> texts) {
  ++calls_;
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(vector_for(t, dimension_));
  return out;
}

}  // namespace citing
