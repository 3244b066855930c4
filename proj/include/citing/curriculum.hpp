#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citing/json_io.hpp"
#include "citing/providers/provider.hpp"
#include "citing/records.hpp"

namespace citing {

inline constexpr std::string_view kRevisionPreamble =
    "Below is an instruction and its response. In addition, a criteria for the instruction is given to "
    "provide a good or bad judgment standard for completing this instruction. Please revise the response "
    "according to the given instruction and criteria.";

/// `field_prefix` is prepended to the four labeled lines, e.g. "## " to turn
/// them into Markdown headers.
struct RevisionTemplate {
  std::string field_prefix;
};

/// Preamble, then `Instruction:`, `Response:`, `Criteria:` lines and the
/// closing cue, one per line. Throws DataError on an empty input.
std::string build_revision_prompt(const std::string& instruction, const std::string& criteria,
                                  const std::string& response, const RevisionTemplate& tmpl = {});

enum class StudentPrompt { Bare, WithContext };
StudentPrompt parse_student_prompt(const std::string& name);

/// The instruction alone, or with a non-empty context appended after a blank line.
std::string render_student_prompt(const InstructionRecord& record, StudentPrompt style);

struct GenerationOptions {
  std::string model;
  double temperature = 0.0;
  int max_new_tokens = 512;
  StudentPrompt style = StudentPrompt::Bare;
  std::size_t parallelism = 1;
  /// Finished responses are kept here (one `{record_id, response}` per line)
  /// and reused by the next call, so an aborted batch resumes where it stopped.
  std::optional<std::filesystem::path> partial_path;
};

struct GeneratedResponse {
  std::string record_id;
  std::string response;
  bool operator==(const GeneratedResponse&) const = default;
};

/// One response per record, in input order. A provider failure aborts the
/// batch after the completed responses are written to `partial_path`.
std::vector<GeneratedResponse> generate_initial_responses(const ChatProvider& student,
                                                          std::span<const InstructionRecord> records,
                                                          const GenerationOptions& options);

struct RevisionItem {
  std::string record_id;
  std::string instruction;
  std::string criteria;
  std::string prior_response;
};

struct RevisionOptions {
  std::string model;
  double temperature = 0.7;
  int max_new_tokens = 512;
  double failure_threshold = 0.02;
  std::size_t parallelism = 1;
  RevisionTemplate tmpl;
};

struct RevisionFailure {
  std::size_t index = 0;
  std::string record_id;
  std::string message;
};

struct RevisionOutcome {
  /// Aligned with the input; empty where the item failed.
  std::vector<std::optional<std::string>> revised;
  std::vector<RevisionFailure> failures;

  Json report() const;
};

/// Replies are trimmed; an empty reply or a provider error fails that item
/// only. Throws PipelineError when failures exceed `failure_threshold` of the
/// items.
RevisionOutcome revise_responses(const ChatProvider& teacher, std::span<const RevisionItem> items,
                                 const RevisionOptions& options);

/// One teacher revision of the round-k response. The training file that holds
/// it trains the round-(k+1) model and carries meta.round = k + 1.
struct CurriculumExample {
  std::string record_id;
  std::string instruction;
  std::string criteria;
  std::string prior_response;
  std::string revised_response;
  int round = 0;
  std::string prompt;
};

CurriculumExample make_curriculum_example(const RevisionItem& item, std::string revised, int round,
                                          const RevisionTemplate& tmpl = {});

struct TrainingFileManifest {
  std::filesystem::path path;
  std::size_t count = 0;
  int round = 0;
  std::string digest;
};

Json manifest_to_json(const TrainingFileManifest& manifest, const std::filesystem::path& relative_to = {});

/// Lines are `{prompt, completion, meta: {record_id, round}}`. Throws DataError
/// for an empty list or mixed rounds.
TrainingFileManifest emit_training_file(std::span<const CurriculumExample> examples,
                                        const std::filesystem::path& path);

/// Supervised file: prompt is the rendered student prompt, completion the
/// reference response, meta.round = 0.
TrainingFileManifest emit_sft_file(std::span<const InstructionRecord> records, const std::filesystem::path& path,
                                   StudentPrompt style = StudentPrompt::Bare);

struct RevisionChain {
  std::string record_id;
  std::string instruction;
  std::vector<std::string> responses;
  std::string criteria;
  /// Set when a provider failure cut the chain short.
  std::optional<std::string> error;

  bool truncated() const { return error.has_value(); }
  const std::string& answer() const;
};

struct InferenceOptions {
  std::string model;
  double temperature = 0.0;
  int max_new_tokens = 512;
  StudentPrompt style = StudentPrompt::Bare;
  RevisionTemplate tmpl;
};

/// r0 from the student prompt, then m self-revisions by the same model, each
/// prompted with the previous response.
RevisionChain infer_with_self_revision(const ChatProvider& student, const InstructionRecord& record,
                                       const std::string& criteria, int m, const InferenceOptions& options);

Json chain_to_json(const RevisionChain& chain);
RevisionChain chain_from_json(const Json& j);

/// Fixed seeded sample of at most `size` ids, reused by every round.
std::vector<InstructionRecord> sample_curriculum(const std::vector<InstructionRecord>& train, std::size_t size,
                                                 std::uint64_t seed);

}  // namespace citing
