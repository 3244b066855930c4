#include "citing/judge.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "citing/digest.hpp"
#include "citing/error.hpp"
#include "citing/providers/parallel.hpp"

namespace citing {

namespace fs = std::filesystem;

namespace {

constexpr MetricDefinition kArticulate{
    "Articulate",
    "Articulate is to judge how clearly and fluently a response is presented, which looks at the structure, "
    "language quality, and overall readability.",
    {"Grammar and syntax correctness", "Logical flow of information",
     "Avoidance of jargon, or if jargon is used, it is properly explained"}};

constexpr MetricDefinition kInDepth{
    "In-depth",
    "In-depth focuses on how thoroughly a topic or question is addressed. An in-depth response delves into "
    "details and nuances, rather than just scratching the surface.",
    {"Coverage of core principles or concepts", "Incorporation of nuanced viewpoints or less-known facts",
     "Demonstrated understanding beyond the basic level"}};

constexpr MetricDefinition kComprehensive{
    "Comprehensive",
    "Comprehensive evaluates the breadth of a response and is about covering a wide range of related facets "
    "or sub-topics.",
    {"Addressing multiple angles or facets of the question", "Incorporating various viewpoints or perspectives",
     "Ensuring no major sub-topic or relevant information is left out"}};

Outcome flip(Outcome o) {
  if (o == Outcome::Win) return Outcome::Lose;
  if (o == Outcome::Lose) return Outcome::Win;
  return Outcome::Tie;
}

PresentedOrder opposite(PresentedOrder o) { return o == PresentedOrder::AB ? PresentedOrder::BA : PresentedOrder::AB; }

}  // namespace

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::Articulate: return "articulate";
    case Metric::InDepth: return "in_depth";
    case Metric::Comprehensive: return "comprehensive";
  }
  return "articulate";
}

Metric parse_metric(const std::string& name) {
  if (name == "articulate") return Metric::Articulate;
  if (name == "in_depth" || name == "in-depth") return Metric::InDepth;
  if (name == "comprehensive") return Metric::Comprehensive;
  throw UsageError("unknown judge metric \"" + name + "\"");
}

std::vector<Metric> parse_metric_list(const std::string& comma_separated) {
  std::vector<Metric> out;
  std::stringstream ss(comma_separated);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto m = parse_metric(item);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw UsageError("no judge metrics given");
  return out;
}

const MetricDefinition& metric_definition(Metric metric) {
  switch (metric) {
    case Metric::Articulate: return kArticulate;
    case Metric::InDepth: return kInDepth;
    case Metric::Comprehensive: return kComprehensive;
  }
  return kArticulate;
}

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Win: return "win";
    case Outcome::Tie: return "tie";
    case Outcome::Lose: return "lose";
  }
  return "tie";
}

std::string to_string(PresentedOrder order) { return order == PresentedOrder::AB ? "AB" : "BA"; }

Outcome parse_outcome(const std::string& name) {
  if (name == "win") return Outcome::Win;
  if (name == "tie") return Outcome::Tie;
  if (name == "lose") return Outcome::Lose;
  throw DataError("unknown outcome \"" + name + "\"");
}

PresentedOrder parse_presented_order(const std::string& name) {
  if (name == "AB") return PresentedOrder::AB;
  if (name == "BA") return PresentedOrder::BA;
  throw DataError("unknown presented order \"" + name + "\"");
}

std::string build_judge_prompt(const std::string& instruction, const std::string& response_1,
                               const std::string& response_2, Metric metric) {
  if (instruction.empty() || response_1.empty() || response_2.empty()) {
    throw DataError("judge prompt needs a non-empty instruction and two non-empty responses");
  }
  const auto& d = metric_definition(metric);
  std::string out;
  out += "Compare the two responses to the instruction below on one aspect: ";
  out += d.display_name;
  out += ".\n";
  out += d.definition;
  out += "\nJudge the aspect by:\n";
  for (std::size_t i = 0; i < d.criteria.size(); ++i) {
    out += "(" + std::to_string(i + 1) + ") ";
    out += d.criteria[i];
    out += '\n';
  }
  out += "\nInstruction: " + instruction + "\n\n";
  out += "Response 1: " + response_1 + "\n\n";
  out += "Response 2: " + response_2 + "\n\n";
  out += "Which response is better on ";
  out += d.display_name;
  out += "? You may explain briefly. End your answer with exactly one final token: 1, 2 or tie.";
  return out;
}

Outcome parse_verdict(const std::string& raw, PresentedOrder order) {
  std::size_t end = raw.size();
  while (end > 0) {
    while (end > 0 && !std::isalnum(static_cast<unsigned char>(raw[end - 1]))) --end;
    std::size_t begin = end;
    while (begin > 0 && std::isalnum(static_cast<unsigned char>(raw[begin - 1]))) --begin;
    std::string token = raw.substr(begin, end - begin);
    std::transform(token.begin(), token.end(), token.begin(), [](unsigned char c) { return std::tolower(c); });
    if (token == "tie") return Outcome::Tie;
    if (token == "1" || token == "2") {
      const bool first_won = token == "1";
      const bool a_won = (order == PresentedOrder::AB) == first_won;
      return a_won ? Outcome::Win : Outcome::Lose;
    }
    end = begin;
  }
  const auto tail = raw.size() > 60 ? raw.substr(raw.size() - 60) : raw;
  throw ParseError("no verdict token (1, 2 or tie)", raw.size() - tail.size(), tail.size(), tail);
}

PresentedOrder presented_order_for(std::uint64_t seed, const std::string& record_id, Metric metric) {
  const auto d = sha256(std::to_string(seed) + '\x1f' + record_id + '\x1f' + to_string(metric));
  return (d[0] & 1) ? PresentedOrder::BA : PresentedOrder::AB;
}

const MetricTally& ComparisonReport::tally(Metric metric) const {
  for (const auto& [m, t] : tallies) {
    if (m == metric) return t;
  }
  throw DataError("report has no tally for metric " + to_string(metric));
}

void ComparisonReport::validate() const {
  for (const auto& [m, t] : tallies) {
    if (t.judged() + t.skipped != total) {
      throw DataError("tally for " + to_string(m) + " covers " + std::to_string(t.judged() + t.skipped) +
                      " comparisons, expected " + std::to_string(total));
    }
  }
}

double ComparisonResult::skip_rate() const {
  const auto total = report.total * report.tallies.size();
  return total == 0 ? 0.0 : static_cast<double>(skips.size()) / static_cast<double>(total);
}

ComparisonResult run_comparison(const ChatProvider& judge, std::span<const PairedResponse> pairs,
                                const ComparisonOptions& options) {
  if (pairs.empty()) throw DataError("nothing to compare");
  if (options.metrics.empty()) throw DataError("no judge metrics selected");
  struct Task {
    std::size_t pair;
    Metric metric;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (auto m : options.metrics) tasks.push_back({i, m});
  }

  struct Slot {
    std::optional<JudgeVerdict> verdict;
    std::optional<SkippedComparison> skip;
  };
  std::vector<Slot> slots(tasks.size());

  auto ask = [&](const PairedResponse& p, Metric m, PresentedOrder order) {
    const bool ab = order == PresentedOrder::AB;
    const auto prompt =
        build_judge_prompt(p.instruction, ab ? p.response_a : p.response_b, ab ? p.response_b : p.response_a, m);
    auto raw = judge.chat(ChatRequest::single_turn(options.model, prompt, options.temperature, options.max_new_tokens));
    auto outcome = parse_verdict(raw, order);
    return std::pair{outcome, std::move(raw)};
  };

  ordered_parallel_for(tasks.size(), options.parallelism, judge.ledger(), [&](std::size_t t) {
    const auto& p = pairs[tasks[t].pair];
    const auto m = tasks[t].metric;
    const auto order = presented_order_for(options.seed, p.record_id, m);
    try {
      auto [outcome, raw] = ask(p, m, order);
      JudgeVerdict v{p.record_id, m, outcome, order, std::move(raw), std::nullopt, std::nullopt};
      if (options.both_orders) {
        auto [audit, audit_raw] = ask(p, m, opposite(order));
        v.audit_outcome = audit;
        v.audit_raw_judgment = std::move(audit_raw);
      }
      slots[t].verdict = std::move(v);
    } catch (const ProviderError& e) {
      slots[t].skip = SkippedComparison{p.record_id, m, e.what()};
    } catch (const ParseError& e) {
      slots[t].skip = SkippedComparison{p.record_id, m, e.what()};
    }
  });

  ComparisonResult result;
  for (auto& s : slots) {
    if (s.verdict) result.verdicts.push_back(std::move(*s.verdict));
    if (s.skip) result.skips.push_back(std::move(*s.skip));
  }
  auto key = [](const auto& v) { return std::pair{v.record_id, static_cast<int>(v.metric)}; };
  std::stable_sort(result.verdicts.begin(), result.verdicts.end(),
                   [&](const auto& x, const auto& y) { return key(x) < key(y); });
  std::stable_sort(result.skips.begin(), result.skips.end(),
                   [&](const auto& x, const auto& y) { return key(x) < key(y); });
  result.report = tally_verdicts(result.verdicts, result.skips, options.metrics, pairs.size(), options.system_a,
                                 options.system_b, options.model, options.seed);
  return result;
}

void check_skip_rate(const ComparisonResult& result, double threshold) {
  if (result.skip_rate() > threshold) {
    throw PipelineError(std::to_string(result.skips.size()) + " judge comparisons skipped (" +
                        format_number(result.skip_rate() * 100.0) + "%), above the limit of " +
                        format_number(threshold * 100.0) + "%");
  }
}

ComparisonReport tally_verdicts(std::span<const JudgeVerdict> verdicts, std::span<const SkippedComparison> skips,
                                std::span<const Metric> metrics, std::size_t total, std::string system_a,
                                std::string system_b, std::string judge_model, std::uint64_t seed) {
  ComparisonReport r;
  r.system_a = std::move(system_a);
  r.system_b = std::move(system_b);
  r.judge_model = std::move(judge_model);
  r.seed = seed;
  r.total = total;
  std::map<Metric, MetricTally> acc;
  for (auto m : metrics) acc[m];
  std::size_t audited = 0;
  std::size_t consistent = 0;
  for (const auto& v : verdicts) {
    auto it = acc.find(v.metric);
    if (it == acc.end()) continue;
    auto& t = it->second;
    if (v.outcome == Outcome::Win) ++t.win;
    if (v.outcome == Outcome::Tie) ++t.tie;
    if (v.outcome == Outcome::Lose) ++t.lose;
    if (v.audit_outcome) {
      ++audited;
      if (*v.audit_outcome == v.outcome) ++consistent;
    }
  }
  for (const auto& s : skips) {
    if (auto it = acc.find(s.metric); it != acc.end()) ++it->second.skipped;
  }
  for (auto m : metrics) r.tallies.emplace_back(m, acc[m]);
  if (audited > 0) r.flip_consistency = static_cast<double>(consistent) / static_cast<double>(audited);
  r.validate();
  return r;
}

std::vector<JudgeVerdict> swap_systems(std::span<const JudgeVerdict> verdicts) {
  std::vector<JudgeVerdict> out(verdicts.begin(), verdicts.end());
  for (auto& v : out) {
    v.outcome = flip(v.outcome);
    v.presented_order = opposite(v.presented_order);
    if (v.audit_outcome) v.audit_outcome = flip(*v.audit_outcome);
  }
  return out;
}

int percent(std::size_t count, std::size_t total) {
  if (total == 0) return 0;
  // floor((200 c + t) / 2t) is round-half-up, i.e. away from zero for c >= 0.
  return static_cast<int>((200 * count + total) / (2 * total));
}

std::string format_tally_cell(const MetricTally& t) {
  const auto n = t.judged();
  if (n == 0) return "n/a";
  return std::to_string(percent(t.win, n)) + "% " + std::to_string(percent(t.tie, n)) + "% " +
         std::to_string(percent(t.lose, n)) + "%";
}

ReportLayout parse_report_layout(const std::string& name) {
  if (name == "markdown" || name == "md") return ReportLayout::Markdown;
  if (name == "json") return ReportLayout::Json;
  throw UsageError("unknown report layout \"" + name + "\"");
}

std::string render_report(std::span<const ComparisonReport> reports, ReportLayout layout) {
  if (layout == ReportLayout::Json) {
    Json arr = Json::array();
    for (const auto& r : reports) arr.push_back(report_to_json(r));
    return (reports.size() == 1 ? arr[0] : arr).dump(2) + "\n";
  }
  std::vector<Metric> columns;
  for (const auto& r : reports) {
    for (const auto& [m, t] : r.tallies) {
      if (std::find(columns.begin(), columns.end(), m) == columns.end()) columns.push_back(m);
    }
  }
  std::sort(columns.begin(), columns.end());
  std::string out = "| Comparison |";
  for (auto m : columns) {
    out += " ";
    out += metric_definition(m).display_name;
    out += " (Win Tie Lose) |";
  }
  out += "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& r : reports) {
    out += "| " + r.system_a + " vs " + r.system_b + " |";
    for (auto m : columns) {
      auto it = std::find_if(r.tallies.begin(), r.tallies.end(), [&](const auto& p) { return p.first == m; });
      out += " " + (it == r.tallies.end() ? std::string("n/a") : format_tally_cell(it->second)) + " |";
    }
    out += "\n";
  }
  return out;
}

std::string render_report(const ComparisonReport& report, ReportLayout layout) {
  return render_report(std::span<const ComparisonReport>(&report, 1), layout);
}

Json report_to_json(const ComparisonReport& r) {
  Json metrics = Json::object();
  for (const auto& [m, t] : r.tallies) {
    metrics[to_string(m)] = Json{{"win", t.win}, {"tie", t.tie}, {"lose", t.lose}, {"skipped", t.skipped}};
  }
  Json j{{"system_a", r.system_a}, {"system_b", r.system_b}, {"judge_model", r.judge_model},
         {"seed", r.seed},         {"total", r.total},       {"metrics", std::move(metrics)}};
  if (r.flip_consistency) j["flip_consistency"] = *r.flip_consistency;
  return j;
}

ComparisonReport report_from_json(const Json& j) {
  ComparisonReport r;
  try {
    r.system_a = j.at("system_a").get<std::string>();
    r.system_b = j.at("system_b").get<std::string>();
    r.judge_model = j.value("judge_model", std::string());
    r.seed = j.value("seed", std::uint64_t{0});
    r.total = j.at("total").get<std::size_t>();
    for (const auto& [name, t] : j.at("metrics").items()) {
      r.tallies.emplace_back(parse_metric(name), MetricTally{t.at("win").get<std::size_t>(),
                                                              t.at("tie").get<std::size_t>(),
                                                              t.at("lose").get<std::size_t>(),
                                                              t.value("skipped", std::size_t{0})});
    }
    if (j.contains("flip_consistency")) r.flip_consistency = j["flip_consistency"].get<double>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed comparison report: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("malformed comparison report: ") + e.what());
  }
  r.validate();
  return r;
}

std::vector<ComparisonReport> load_reports(const fs::path& path) {
  const auto j = read_json_file(path);
  std::vector<ComparisonReport> out;
  if (j.is_array()) {
    for (const auto& item : j) out.push_back(report_from_json(item));
  } else {
    out.push_back(report_from_json(j));
  }
  return out;
}

Json verdict_to_json(const JudgeVerdict& v) {
  Json j{{"record_id", v.record_id},
         {"metric", to_string(v.metric)},
         {"outcome", to_string(v.outcome)},
         {"presented_order", to_string(v.presented_order)},
         {"raw_judgment", v.raw_judgment}};
  if (v.audit_outcome) j["audit_outcome"] = to_string(*v.audit_outcome);
  if (v.audit_raw_judgment) j["audit_raw_judgment"] = *v.audit_raw_judgment;
  return j;
}

JudgeVerdict verdict_from_json(const Json& j) {
  JudgeVerdict v;
  try {
    v.record_id = j.at("record_id").get<std::string>();
    v.metric = parse_metric(j.at("metric").get<std::string>());
    v.outcome = parse_outcome(j.at("outcome").get<std::string>());
    v.presented_order = parse_presented_order(j.at("presented_order").get<std::string>());
    v.raw_judgment = j.value("raw_judgment", std::string());
    if (j.contains("audit_outcome")) v.audit_outcome = parse_outcome(j["audit_outcome"].get<std::string>());
    if (j.contains("audit_raw_judgment")) v.audit_raw_judgment = j["audit_raw_judgment"].get<std::string>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed verdict: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("malformed verdict: ") + e.what());
  }
  return v;
}

Json skip_to_json(const SkippedComparison& s) {
  return Json{{"record_id", s.record_id}, {"metric", to_string(s.metric)}, {"reason", s.reason}};
}

namespace {

struct ResponseLine {
  std::string instruction;
  std::string response;
};

std::vector<std::pair<std::string, ResponseLine>> read_responses(const fs::path& path) {
  std::vector<std::pair<std::string, ResponseLine>> out;
  std::size_t n = 0;
  for (const auto& line : read_jsonl_file(path)) {
    ++n;
    std::string id;
    if (line.contains("id")) id = line["id"].get<std::string>();
    else if (line.contains("record_id")) id = line["record_id"].get<std::string>();
    if (id.empty() || !line.contains("response") || !line["response"].is_string()) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": needs an id and a response");
    }
    out.push_back({id, {line.value("instruction", std::string()), line["response"].get<std::string>()}});
  }
  return out;
}

}  // namespace

std::vector<PairedResponse> load_response_pairs(const fs::path& a, const fs::path& b) {
  const auto left = read_responses(a);
  std::map<std::string, ResponseLine> right;
  for (auto& [id, line] : read_responses(b)) right[id] = line;
  if (left.size() != right.size()) {
    throw DataError("response files hold " + std::to_string(left.size()) + " and " + std::to_string(right.size()) +
                    " records");
  }
  std::vector<PairedResponse> out;
  for (const auto& [id, line] : left) {
    auto it = right.find(id);
    if (it == right.end()) throw DataError("record " + id + " is missing from " + b.string());
    auto instruction = !line.instruction.empty() ? line.instruction : it->second.instruction;
    if (instruction.empty()) throw DataError("record " + id + " has no instruction in either file");
    out.push_back({id, std::move(instruction), line.response, it->second.response});
  }
  return out;
}

void write_comparison(const fs::path& dir, const ComparisonResult& result) {
  fs::create_directories(dir);
  std::vector<Json> lines;
  for (const auto& v : result.verdicts) lines.push_back(verdict_to_json(v));
  write_jsonl_file(dir / "verdicts.jsonl", lines);
  lines.clear();
  for (const auto& s : result.skips) lines.push_back(skip_to_json(s));
  write_jsonl_file(dir / "skips.jsonl", lines);
  write_file_atomic(dir / "report.json", render_report(result.report, ReportLayout::Json));
  write_file_atomic(dir / "report.md", render_report(result.report, ReportLayout::Markdown));
}

}  // namespace citing
