// Acceptance checks. Each prints one PASS/FAIL line with its measured runtime
// against a fixed limit; the exit status is non-zero when any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "citing/curriculum.hpp"
#include "citing/digest.hpp"
#include "citing/judge.hpp"
#include "citing/matching.hpp"
#include "citing/pipeline.hpp"
#include "citing/rubrics.hpp"
#include "citing/split.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace {

using namespace citing;
namespace fs = std::filesystem;

// Expected literals, spelled out here rather than taken from the library.
constexpr std::string_view kExpectedPreamble =
    "Below is an instruction and its response. In addition, a criteria for the instruction is given to provide a "
    "good or bad judgment standard for completing this instruction. Please revise the response according to the "
    "given instruction and criteria.";
constexpr std::string_view kExpectedClassification =
    "Please classify the following instructions and give good or bad criteria for each category:";
constexpr std::string_view kMarker = "[R]";

struct CheckResult {
  bool pass = false;
  std::string detail;
};

struct Check {
  std::string name;
  double limit_seconds;
  std::function<CheckResult()> run;
};

std::size_t count_of(const std::string& text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

std::string between(const std::string& text, const std::string& open, const std::string& close) {
  const auto start = text.find(open);
  if (start == std::string::npos) return {};
  const auto from = start + open.size();
  const auto end = text.find(close, from);
  return text.substr(from, end == std::string::npos ? std::string::npos : end - from);
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(dim);
  do {
    for (auto& x : v) x = u(rng);
  } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
  return v;
}

PipelineConfig mock_config(const fs::path& root, const std::string& name, int rounds, int m) {
  PipelineConfig c;
  c.run_name = name;
  c.run_root = root;
  c.dataset = testing::data_dir() / "alpaca_tiny.json";
  c.split_ratios = {8, 1, 1};
  c.n_rounds = rounds;
  c.m_inference_rounds = m;
  c.curriculum_sample_size = 20;
  c.induction_sample_size = 20;
  c.trainer_hyperparams.epochs = 1;
  return c;
}

CheckResult category_score_oracle() {
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  std::size_t argmax_ok = 0;
  const std::size_t instances = 200;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
    const std::size_t categories = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    const std::size_t per_category_max = 100 / categories;
    RubricSet rubrics;
    std::vector<CategoryEmbeddingIndex> indexes;
    std::vector<std::vector<std::vector<double>>> raw(categories);
    for (std::size_t c = 0; c < categories; ++c) {
      rubrics.categories.push_back({static_cast<int>(c), "C" + std::to_string(c), "criteria " + std::to_string(c), {}});
      CategoryEmbeddingIndex index;
      index.category_id = static_cast<int>(c);
      index.dimension = dim;
      const std::size_t count = std::uniform_int_distribution<std::size_t>(1, per_category_max)(rng);
      for (std::size_t k = 0; k < count; ++k) {
        raw[c].push_back(random_vector(rng, dim));
        index.vectors.emplace_back(raw[c].back());
        index.source_ids.push_back(fmt::format("{}-{}", c, k));
      }
      indexes.push_back(std::move(index));
    }
    const auto query_raw = random_vector(rng, dim);
    const EmbeddingVector query(query_raw);
    std::vector<double> expected;
    for (std::size_t c = 0; c < categories; ++c) {
      const double got = score_category(query, indexes[c]);
      const double want = oracle::category_score(query_raw, raw[c]);
      expected.push_back(want);
      worst = std::max(worst, std::abs(got - want));
    }
    const auto assignment =
        assign_from_embedding(testing::make_record("q", "query"), query, rubrics, indexes);
    if (assignment.category_id == static_cast<int>(oracle::argmax(expected))) ++argmax_ok;
  }
  return {worst <= 1e-9 && argmax_ok == instances,
          fmt::format("{} instances, max |score - oracle| = {:.3g} (tol 1e-9), argmax agreement {}/{}", instances,
                      worst, argmax_ok, instances)};
}

CheckResult cosine_invariances() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
  double worst_scale = 0.0;
  double worst_symmetry = 0.0;
  std::size_t out_of_range = 0;
  const std::size_t pairs = 1000;
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
    const auto a = random_vector(rng, dim);
    // Every tenth pair is parallel or anti-parallel to probe the range ends.
    auto b = random_vector(rng, dim);
    if (i % 10 == 0) b = a;
    if (i % 10 == 5) std::transform(a.begin(), a.end(), b.begin(), [](double x) { return -x; });
    const double lambda = std::pow(10.0, log_scale(rng));
    auto scaled = a;
    for (auto& x : scaled) x *= lambda;
    const EmbeddingVector va(a), vb(b), vs(scaled);
    const double ab = cosine_similarity(va, vb);
    worst_scale = std::max(worst_scale, std::abs(cosine_similarity(vs, vb) - ab));
    worst_symmetry = std::max(worst_symmetry, std::abs(cosine_similarity(vb, va) - ab));
    if (ab < -1.0 || ab > 1.0) ++out_of_range;
  }
  return {worst_scale <= 1e-12 && worst_symmetry <= 1e-12 && out_of_range == 0,
          fmt::format("{} pairs, scale dev {:.3g}, symmetry dev {:.3g} (tol 1e-12), {} outside [-1, 1]", pairs,
                      worst_scale, worst_symmetry, out_of_range)};
}

CheckResult split_correctness() {
  std::mt19937_64 rng(5);
  std::size_t ok = 0;
  const std::size_t trials = 100;
  std::string first_bad;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(0, 5000)(rng);
    std::vector<InstructionRecord> records;
    for (std::size_t i = 0; i < n; ++i) records.push_back(testing::make_record(std::to_string(i), "x"));
    const auto split = split_dataset(records, kDefaultSplitRatios, trial);
    const auto want = oracle::split_sizes(n, {8, 1, 1});
    std::set<std::string> seen;
    bool disjoint = true;
    for (const auto* part : {&split.train, &split.validation, &split.test}) {
      for (const auto& r : *part) disjoint = seen.insert(r.id).second && disjoint;
    }
    const bool sizes = split.train.size() == want[0] && split.validation.size() == want[1] &&
                       split.test.size() == want[2];
    if (sizes && disjoint && seen.size() == n) {
      ++ok;
    } else if (first_bad.empty()) {
      first_bad = fmt::format(", first failure n={}", n);
    }
  }
  const auto big = split_sizes(52000, kDefaultSplitRatios);
  const bool big_ok = big[0] == 41600 && big[1] == 5200 && big[2] == 5200;
  return {ok == trials && big_ok, fmt::format("{}/{} random sizes partition exactly with oracle sizes; 52000 -> "
                                              "{}/{}/{}{}",
                                              ok, trials, big[0], big[1], big[2], first_bad)};
}

CheckResult template_fidelity() {
  testing::TempDir dir;
  const auto config = mock_config(dir.path(), "templates", 2, 1);
  const auto run = run_curriculum(config);
  std::size_t prompts = 0;
  std::size_t faithful = 0;
  for (int t = 1; t <= config.n_rounds; ++t) {
    for (const auto& line : read_jsonl_file(run.run_dir / fmt::format("round_{}.jsonl", t))) {
      ++prompts;
      const auto p = line.at("prompt").get<std::string>();
      const auto pre = p.find(kExpectedPreamble);
      const auto ins = p.find("\nInstruction: ");
      const auto res = p.find("\nResponse: ");
      const auto cri = p.find("\nCriteria: ");
      const auto cue = p.find("\nThe revised response is:");
      if (pre == 0 && ins != std::string::npos && ins < res && res != std::string::npos && res < cri &&
          cri != std::string::npos && cri < cue && cue != std::string::npos) {
        ++faithful;
      }
    }
  }
  std::size_t classification = 0;
  std::size_t classification_ok = 0;
  for (const auto& e : read_jsonl_file(run.run_dir / "ledger.jsonl")) {
    if (e.value("event", "") != "chat" || e.value("role", "") != "teacher") continue;
    const auto p = e["request"]["messages"].back()["content"].get<std::string>();
    if (p.find("Given instructions:") == std::string::npos) continue;
    ++classification;
    if (p.find(kExpectedClassification) != std::string::npos) ++classification_ok;
  }
  return {prompts == 40 && faithful == prompts && classification > 0 && classification_ok == classification,
          fmt::format("{}/{} curriculum prompts carry the preamble and ordered fields; {}/{} classification prompts "
                      "carry the request sentence",
                      faithful, prompts, classification_ok, classification)};
}

CheckResult curriculum_structure() {
  testing::TempDir dir;
  const auto config = mock_config(dir.path(), "structure", 2, 2);

  // The student's answers carry one marker per curriculum round behind the
  // model it runs as; `base+sft` is round 0 and each round adds a `+` segment.
  auto student = std::make_shared<FunctionChatBackend>("student", [](const ChatRequest& r) {
    const auto& p = r.last_user_content();
    if (p.find(kExpectedPreamble) != std::string::npos) {
      return between(p, "\nResponse: ", "\nCriteria: ") + " (self-revised)";
    }
    const auto depth = static_cast<std::size_t>(std::count(r.model_name.begin(), r.model_name.end(), '+')) - 1;
    std::string out = "Answer to: " + p.substr(0, std::min<std::size_t>(p.find('\n'), 40));
    for (std::size_t i = 0; i < depth; ++i) out += " " + std::string(kMarker);
    return out;
  });
  auto teacher = std::make_shared<FunctionChatBackend>("teacher", [](const ChatRequest& r) {
    const auto& p = r.last_user_content();
    if (p.find("Given instructions:") != std::string::npos) return MockTeacherBackend::classification_reply(p);
    return between(p, "\nResponse: ", "\nCriteria: ") + " " + std::string(kMarker);
  });
  auto judge = std::make_shared<GenerativeJudgeBackend>();
  auto providers = testing::provider_set(open_run_ledger(config), teacher, student, judge);
  MockTrainerBackend trainer;
  const auto run = run_curriculum(config, providers, trainer);

  std::vector<std::string> problems;
  if (run.models.size() != 3) problems.push_back(fmt::format("{} models", run.models.size()));
  for (std::size_t t = 0; t < run.models.size(); ++t) {
    const auto& m = run.models[t];
    const std::string parent = t == 0 ? config.trainer.base_model : run.models[t - 1].locator;
    if (m.round != static_cast<int>(t) || m.parent != parent) problems.push_back(fmt::format("lineage at {}", t));
  }
  std::size_t files = 0;
  for (int t = 1; fs::exists(run.run_dir / fmt::format("round_{}.jsonl", t)); ++t) {
    ++files;
    const auto lines = read_jsonl_file(run.run_dir / fmt::format("round_{}.jsonl", t));
    if (lines.size() != 20) problems.push_back(fmt::format("round_{} has {} lines", t, lines.size()));
    for (const auto& l : lines) {
      if (count_of(l["completion"].get<std::string>(), kMarker) != static_cast<std::size_t>(t) ||
          l["meta"]["round"] != t) {
        problems.push_back(fmt::format("round_{} completion markers", t));
        break;
      }
    }
  }
  if (files != 2) problems.push_back(fmt::format("{} curriculum files", files));

  // Each r(j) must appear in the prompt of the call that produced r(j+1),
  // and that call must come later in the ledger.
  std::vector<Json> student_calls;
  for (const auto& e : read_jsonl_file(run.run_dir / "ledger.jsonl")) {
    if (e.value("event", "") == "chat" && e.value("role", "") == "student" &&
        e.value("model", "") == run.models.back().locator) {
      student_calls.push_back(e);
    }
  }
  auto producer = [&](const std::string& response, const std::optional<std::string>& prior) -> long {
    for (std::size_t i = 0; i < student_calls.size(); ++i) {
      const auto& e = student_calls[i];
      if (e["response"] != response) continue;
      const auto p = e["request"]["messages"].back()["content"].get<std::string>();
      if (!prior || between(p, "\nResponse: ", "\nCriteria: ") == *prior) return static_cast<long>(i);
    }
    return -1;
  };
  const auto chains = read_jsonl_file(run.run_dir / "infer/chains.jsonl");
  std::size_t causal = 0;
  for (const auto& j : chains) {
    const auto chain = chain_from_json(j);
    if (chain.responses.size() != 3) continue;
    long last = producer(chain.responses[0], std::nullopt);
    bool ok = last >= 0;
    for (std::size_t k = 1; ok && k < chain.responses.size(); ++k) {
      const long at = producer(chain.responses[k], chain.responses[k - 1]);
      ok = at > last;
      last = at;
    }
    if (ok) ++causal;
  }
  if (chains.empty() || causal != chains.size()) {
    problems.push_back(fmt::format("{}/{} chains of length 3 with ledger causality", causal, chains.size()));
  }
  std::string detail = fmt::format("{} models, {} curriculum files, {} chains verified", run.models.size(), files,
                                   causal);
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

CheckResult judge_conservation() {
  std::vector<PairedResponse> pairs;
  for (int i = 0; i < 100; ++i) {
    const auto id = fmt::format("p{:03}", i);
    pairs.push_back({id, "Instruction " + id, fmt::format("A says {} {}", id, std::string(i % 7, '!')),
                     fmt::format("B says {} {}", id, std::string(i % 5, '?'))});
  }
  // Prefers whichever response has the larger digest, wherever it is shown.
  auto content_judge = [](const ChatRequest& r) {
    const auto& p = r.last_user_content();
    const auto one = sha256_hex(between(p, "Response 1: ", "\n\nResponse 2: "));
    const auto two = sha256_hex(between(p, "Response 2: ", "\n\nWhich response"));
    return std::string(one > two ? "Response 1 is better. 1" : "2");
  };
  std::vector<std::pair<std::string, FunctionChatBackend::Fn>> judges{
      {"first", [](const ChatRequest&) { return std::string("1"); }},
      {"tie", [](const ChatRequest&) { return std::string("tie"); }},
      {"content", content_judge},
  };
  auto generative = std::make_shared<GenerativeJudgeBackend>();
  judges.emplace_back("generative", [generative](const ChatRequest& r) { return generative->complete(r); });

  ComparisonOptions options;
  options.seed = 99;
  std::size_t conserved = 0;
  std::size_t antisymmetric = 0;
  std::size_t checks = 0;
  for (const auto& [name, fn] : judges) {
    auto judge = testing::fn_provider(fn, "judge");
    const auto result = run_comparison(*judge, pairs, options);
    const auto swapped = tally_verdicts(swap_systems(result.verdicts), result.skips, options.metrics, pairs.size(),
                                        "B", "A", "judge", options.seed);
    for (auto m : options.metrics) {
      ++checks;
      const auto& t = result.report.tally(m);
      const auto& s = swapped.tally(m);
      if (t.win + t.tie + t.lose == 100 && t.skipped == 0) ++conserved;
      if (s.win == t.lose && s.lose == t.win && s.tie == t.tie) ++antisymmetric;
    }
  }
  // A position-independent judge must also give mirrored counts when the
  // systems are exchanged in the inputs themselves.
  auto judge = testing::fn_provider(content_judge, "judge");
  auto flipped_pairs = pairs;
  for (auto& p : flipped_pairs) std::swap(p.response_a, p.response_b);
  const auto forward = run_comparison(*judge, pairs, options);
  const auto backward = run_comparison(*judge, flipped_pairs, options);
  std::size_t rerun_mirrored = 0;
  for (auto m : options.metrics) {
    const auto& f = forward.report.tally(m);
    const auto& b = backward.report.tally(m);
    if (f.win == b.lose && f.lose == b.win && f.tie == b.tie) ++rerun_mirrored;
  }
  ComparisonReport table;
  table.system_a = "CITING";
  table.system_b = "SFT";
  table.total = 100;
  table.tallies = {{Metric::Articulate, {75, 4, 21, 0}}};
  const auto cell = format_tally_cell(table.tally(Metric::Articulate));
  const bool rendered = render_report(table, ReportLayout::Markdown).find("| 75% 4% 21% |") != std::string::npos;
  const bool pass = conserved == checks && antisymmetric == checks && rerun_mirrored == options.metrics.size() &&
                    cell == "75% 4% 21%" && rendered;
  return {pass, fmt::format("conservation {}/{}, swapped tallies mirrored {}/{}, re-judged swap mirrored {}/{}, "
                            "cell \"{}\"",
                            conserved, checks, antisymmetric, checks, rerun_mirrored, options.metrics.size(), cell)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir).generic_string();
    auto contents = read_text_file(entry.path());
    if (rel == "ledger.jsonl") {
      std::string normalized;
      std::istringstream in(contents);
      for (std::string line; std::getline(in, line);) {
        auto j = Json::parse(line);
        j["ts"] = "normalized";
        normalized += j.dump() + "\n";
      }
      contents = std::move(normalized);
    }
    out[rel] = std::move(contents);
  }
  return out;
}

CheckResult determinism() {
  testing::TempDir dir;
  auto config = mock_config(dir.path() / "first", "same", 2, 2);
  config.judge_settings.round_over_round = true;
  auto second = config;
  second.run_root = dir.path() / "second";
  run_curriculum(config);
  run_curriculum(second);
  const auto a = snapshot(config.run_dir());
  const auto b = snapshot(second.run_dir());
  std::vector<std::string> differing;
  for (const auto& [path, contents] : a) {
    auto it = b.find(path);
    if (it == b.end() || it->second != contents) differing.push_back(path);
  }
  for (const auto& [path, contents] : b) {
    if (!a.count(path)) differing.push_back(path);
  }
  std::string detail = fmt::format("{} files compared, {} differ", a.size(), differing.size());
  if (!differing.empty()) detail += " (first: " + differing.front() + ")";
  return {differing.empty() && a.size() > 10, detail};
}

CheckResult rubric_round_trip() {
  const auto text = read_text_file(testing::data_dir() / "five_category_reply.txt");
  const auto reference = read_json_file(testing::data_dir() / "five_category_rubric.json");
  std::vector<std::string> ids;
  for (int i = 1; i <= 10; ++i) ids.push_back(fmt::format("i{:02}", i));
  auto rubrics = parse_rubric_response(text, ids).rubrics;
  rubrics.teacher_model = "teacher";
  rubrics.raw_teacher_output = text;
  std::size_t verbatim = 0;
  const auto& expected = reference.at("categories");
  for (std::size_t i = 0; i < rubrics.categories.size() && i < expected.size(); ++i) {
    if (rubrics.categories[i].name == expected[i]["name"] && rubrics.categories[i].criteria == expected[i]["criteria"]) {
      ++verbatim;
    }
  }
  testing::TempDir dir;
  save_rubrics(dir / "rubrics.json", rubrics);
  const auto reloaded = load_rubrics(dir / "rubrics.json");
  const bool same = reloaded == rubrics && rubrics_from_json(rubrics_to_json(rubrics)) == rubrics;
  return {rubrics.categories.size() == 5 && verbatim == 5 && same,
          fmt::format("{} categories parsed, {}/5 names and criteria verbatim, reload {}", rubrics.categories.size(),
                      verbatim, same ? "field-identical" : "differs")};
}

}  // namespace

int main() {
  const std::vector<Check> checks{
      {"category-score-oracle", 5.0, category_score_oracle},
      {"cosine-invariances", 1.0, cosine_invariances},
      {"split-correctness", 1.0, split_correctness},
      {"template-fidelity", 30.0, template_fidelity},
      {"curriculum-structure", 30.0, curriculum_structure},
      {"judge-conservation-antisymmetry", 5.0, judge_conservation},
      {"determinism", 60.0, determinism},
      {"five-category-rubric-roundtrip", 5.0, rubric_round_trip},
  };
  int failures = 0;
  for (const auto& check : checks) {
    const auto start = std::chrono::steady_clock::now();
    CheckResult outcome;
    try {
      outcome = check.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds < check.limit_seconds;
    const bool pass = outcome.pass && in_time;
    if (!pass) ++failures;
    std::cout << fmt::format("{} {}: {} [{:.2f} s, limit {} s{}]\n", pass ? "PASS" : "FAIL", check.name,
                             outcome.detail, seconds, check.limit_seconds, in_time ? "" : ", too slow");
  }
  std::cout << fmt::format("{} of {} acceptance checks passed\n", checks.size() - failures, checks.size());
  return failures == 0 ? 0 : 1;
}
