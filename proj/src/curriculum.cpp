#include "citing/curriculum.hpp"

#include <exception>
#include <map>

#include "citing/digest.hpp"
#include "citing/error.hpp"
#include "citing/providers/parallel.hpp"
#include "citing/random.hpp"

namespace citing {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void require_text(const std::string& value, const char* what) {
  if (value.empty()) throw DataError(std::string("revision prompt needs a non-empty ") + what);
}

}  // namespace

std::string build_revision_prompt(const std::string& instruction, const std::string& criteria,
                                  const std::string& response, const RevisionTemplate& tmpl) {
  require_text(instruction, "instruction");
  require_text(criteria, "criteria");
  require_text(response, "response");
  const auto& p = tmpl.field_prefix;
  std::string out;
  out.reserve(kRevisionPreamble.size() + instruction.size() + criteria.size() + response.size() + 80);
  out += kRevisionPreamble;
  out += '\n';
  out += p + "Instruction: " + instruction + '\n';
  out += p + "Response: " + response + '\n';
  out += p + "Criteria: " + criteria + '\n';
  out += p + "The revised response is:";
  return out;
}

StudentPrompt parse_student_prompt(const std::string& name) {
  if (name == "bare") return StudentPrompt::Bare;
  if (name == "with_context") return StudentPrompt::WithContext;
  throw UsageError("unknown student prompt template \"" + name + "\"");
}

std::string render_student_prompt(const InstructionRecord& record, StudentPrompt style) {
  if (style == StudentPrompt::WithContext && record.context && !record.context->empty()) {
    return record.instruction + "\n\n" + *record.context;
  }
  return record.instruction;
}

std::vector<GeneratedResponse> generate_initial_responses(const ChatProvider& student,
                                                          std::span<const InstructionRecord> records,
                                                          const GenerationOptions& options) {
  std::vector<std::optional<std::string>> done(records.size());
  if (options.partial_path && fs::exists(*options.partial_path)) {
    std::map<std::string, std::string> previous;
    for (const auto& line : read_jsonl_file(*options.partial_path)) {
      previous[line.at("record_id").get<std::string>()] = line.at("response").get<std::string>();
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (auto it = previous.find(records[i].id); it != previous.end()) done[i] = it->second;
    }
  }

  auto persist = [&] {
    if (!options.partial_path) return;
    std::vector<Json> lines;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (done[i]) lines.push_back(Json{{"record_id", records[i].id}, {"response", *done[i]}});
    }
    write_jsonl_file(*options.partial_path, lines);
  };

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!done[i]) pending.push_back(i);
  }
  // Every pending item is attempted so one failure does not discard the
  // others; the first error is rethrown once the finished ones are saved.
  std::vector<std::exception_ptr> errors(pending.size());
  ordered_parallel_for(pending.size(), options.parallelism, student.ledger(), [&](std::size_t p) {
    const auto& record = records[pending[p]];
    auto request = ChatRequest::single_turn(options.model, render_student_prompt(record, options.style),
                                            options.temperature, options.max_new_tokens);
    try {
      done[pending[p]] = student.chat(request);
    } catch (...) {
      errors[p] = std::current_exception();
    }
  });
  persist();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<GeneratedResponse> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out.push_back({records[i].id, *done[i]});
  return out;
}

Json RevisionOutcome::report() const {
  Json dropped = Json::array();
  for (const auto& f : failures) dropped.push_back(Json{{"record_id", f.record_id}, {"error", f.message}});
  return Json{{"items", revised.size()}, {"revised", revised.size() - failures.size()},
              {"dropped", failures.size()}, {"failures", std::move(dropped)}};
}

RevisionOutcome revise_responses(const ChatProvider& teacher, std::span<const RevisionItem> items,
                                 const RevisionOptions& options) {
  if (items.empty()) throw DataError("no responses to revise");
  RevisionOutcome outcome;
  outcome.revised.resize(items.size());
  std::vector<std::optional<std::string>> errors(items.size());
  ordered_parallel_for(items.size(), options.parallelism, teacher.ledger(), [&](std::size_t i) {
    const auto& item = items[i];
    const auto prompt = build_revision_prompt(item.instruction, item.criteria, item.prior_response, options.tmpl);
    try {
      auto reply = trim(teacher.chat(
          ChatRequest::single_turn(options.model, prompt, options.temperature, options.max_new_tokens)));
      if (reply.empty()) {
        errors[i] = "teacher returned an empty revision";
      } else {
        outcome.revised[i] = std::move(reply);
      }
    } catch (const ProviderError& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (errors[i]) outcome.failures.push_back({i, items[i].record_id, *errors[i]});
  }
  const double fraction = static_cast<double>(outcome.failures.size()) / static_cast<double>(items.size());
  if (fraction > options.failure_threshold) {
    throw PipelineError(std::to_string(outcome.failures.size()) + " of " + std::to_string(items.size()) +
                        " revisions failed, above the threshold of " + format_number(options.failure_threshold) +
                        "; first failure (" + outcome.failures.front().record_id +
                        "): " + outcome.failures.front().message);
  }
  return outcome;
}

CurriculumExample make_curriculum_example(const RevisionItem& item, std::string revised, int round,
                                          const RevisionTemplate& tmpl) {
  if (revised.empty()) throw DataError("empty revision for record " + item.record_id);
  CurriculumExample ex;
  ex.record_id = item.record_id;
  ex.instruction = item.instruction;
  ex.criteria = item.criteria;
  ex.prior_response = item.prior_response;
  ex.revised_response = std::move(revised);
  ex.round = round;
  ex.prompt = build_revision_prompt(item.instruction, item.criteria, item.prior_response, tmpl);
  return ex;
}

Json manifest_to_json(const TrainingFileManifest& manifest, const fs::path& relative_to) {
  auto p = relative_to.empty() ? manifest.path : fs::relative(manifest.path, relative_to);
  return Json{{"path", p.generic_string()},
              {"count", manifest.count},
              {"round", manifest.round},
              {"digest", manifest.digest}};
}

namespace {

TrainingFileManifest write_training_lines(const std::vector<Json>& lines, int round, const fs::path& path) {
  write_jsonl_file(path, lines);
  return TrainingFileManifest{path, lines.size(), round, file_sha256_hex(path)};
}

}  // namespace

TrainingFileManifest emit_training_file(std::span<const CurriculumExample> examples, const fs::path& path) {
  if (examples.empty()) throw DataError("a training round needs at least one example");
  const int round = examples.front().round;
  std::vector<Json> lines;
  lines.reserve(examples.size());
  for (const auto& ex : examples) {
    if (ex.round != round) {
      throw DataError("mixed rounds in training examples (" + std::to_string(round) + " and " +
                      std::to_string(ex.round) + ")");
    }
    if (ex.prompt.empty() || ex.revised_response.empty()) {
      throw DataError("training example for record " + ex.record_id + " has an empty prompt or completion");
    }
    lines.push_back(Json{{"prompt", ex.prompt},
                         {"completion", ex.revised_response},
                         {"meta", Json{{"record_id", ex.record_id}, {"round", ex.round + 1}}}});
  }
  return write_training_lines(lines, round + 1, path);
}

TrainingFileManifest emit_sft_file(std::span<const InstructionRecord> records, const fs::path& path,
                                   StudentPrompt style) {
  if (records.empty()) throw DataError("the supervised stage needs at least one record");
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    if (!r.reference_response || r.reference_response->empty()) {
      throw DataError("record " + r.id + " has no reference response");
    }
    lines.push_back(Json{{"prompt", render_student_prompt(r, style)},
                         {"completion", *r.reference_response},
                         {"meta", Json{{"record_id", r.id}, {"round", 0}}}});
  }
  return write_training_lines(lines, 0, path);
}

const std::string& RevisionChain::answer() const {
  if (responses.empty()) throw DataError("revision chain for record " + record_id + " is empty");
  return responses.back();
}

RevisionChain infer_with_self_revision(const ChatProvider& student, const InstructionRecord& record,
                                       const std::string& criteria, int m, const InferenceOptions& options) {
  if (m < 0) throw DataError("inference rounds must be >= 0");
  RevisionChain chain;
  chain.record_id = record.id;
  chain.instruction = record.instruction;
  chain.criteria = criteria;
  if (m > 0 && criteria.empty()) throw DataError("record " + record.id + " has no criteria for self-revision");
  try {
    chain.responses.push_back(student.chat(ChatRequest::single_turn(
        options.model, render_student_prompt(record, options.style), options.temperature, options.max_new_tokens)));
    for (int j = 0; j < m; ++j) {
      const auto& prev = chain.responses.back();
      if (prev.empty()) throw ProviderError("student returned an empty response", false);
      const auto prompt = build_revision_prompt(record.instruction, criteria, prev, options.tmpl);
      chain.responses.push_back(trim(student.chat(
          ChatRequest::single_turn(options.model, prompt, options.temperature, options.max_new_tokens))));
    }
  } catch (const ProviderError& e) {
    chain.error = e.what();
  }
  return chain;
}

Json chain_to_json(const RevisionChain& chain) {
  Json j{{"record_id", chain.record_id},
         {"instruction", chain.instruction},
         {"criteria", chain.criteria},
         {"responses", chain.responses},
         {"response", chain.responses.empty() ? Json(nullptr) : Json(chain.responses.back())}};
  if (chain.error) j["error"] = *chain.error;
  return j;
}

RevisionChain chain_from_json(const Json& j) {
  RevisionChain c;
  try {
    c.record_id = j.at("record_id").get<std::string>();
    c.instruction = j.value("instruction", std::string());
    c.criteria = j.value("criteria", std::string());
    c.responses = j.at("responses").get<std::vector<std::string>>();
    if (j.contains("error")) c.error = j["error"].get<std::string>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed revision chain: ") + e.what());
  }
  return c;
}

std::vector<InstructionRecord> sample_curriculum(const std::vector<InstructionRecord>& train, std::size_t size,
                                                 std::uint64_t seed) {
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  DeterministicRng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const auto k = std::min(size, train.size());
  std::vector<InstructionRecord> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(train[order[i]]);
  return out;
}

}  // namespace citing
