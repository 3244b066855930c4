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

struct CategoryRubric {
  int category_id = 0;
  std::string name;
  std::string criteria;
  std::vector<std::string> exemplar_ids;

  bool operator==(const CategoryRubric&) const = default;
};

/// Teacher-induced categories with ids 0..M-1. No record id belongs to two categories.
struct RubricSet {
  std::vector<CategoryRubric> categories;
  std::vector<std::string> induction_sample_ids;
  std::string teacher_model;
  std::string raw_teacher_output;

  bool operator==(const RubricSet&) const = default;

  const CategoryRubric& category(int id) const;
  void validate() const;
};

/// `k` distinct records in seeded-shuffle order.
std::vector<InstructionRecord> sample_for_induction(const std::vector<InstructionRecord>& train,
                                                    std::size_t k, std::uint64_t seed);

inline constexpr std::string_view kClassificationInstruction =
    "Please classify the following instructions and give good or bad criteria for each category:";
inline constexpr std::string_view kGivenInstructionsLabel = "Given instructions:";

struct ClassificationPromptOptions {
  std::optional<int> max_categories_hint;
};

/// The classification request followed by the numbered instruction list and a
/// fixed answer-format suffix. Line breaks inside an instruction become spaces
/// so that each instruction occupies exactly one line.
std::string build_classification_prompt(std::span<const InstructionRecord> subset,
                                        const ClassificationPromptOptions& options = {});

struct RubricParse {
  RubricSet rubrics;
  /// Sample ids the teacher did not place in any category.
  std::vector<std::string> unassigned_ids;
};

/// Reads `Category <n>: <name>` / `Criteria: <text>` / `Members: <ordinals>`
/// blocks. Member ordinals are 1-based positions in `sample_ids`. Throws
/// ParseError on zero categories, a repeated category number, an out-of-range
/// ordinal, or an ordinal claimed by two categories.
RubricParse parse_rubric_response(const std::string& text, std::span<const std::string> sample_ids);

struct InductionOptions {
  std::string model;
  double temperature = 0.0;
  int max_new_tokens = 2048;
  ClassificationPromptOptions prompt;
};

struct InductionResult {
  RubricSet rubrics;
  std::vector<std::string> unassigned_ids;
  int teacher_calls = 0;
};

/// Prompt, call, parse; on a parse failure the error is appended to the
/// conversation and the teacher is asked again, up to `retries` times.
InductionResult induce_rubrics(const ChatProvider& teacher, std::span<const InstructionRecord> subset,
                               int retries, const InductionOptions& options);

Json rubrics_to_json(const RubricSet& rubrics);
RubricSet rubrics_from_json(const Json& j);
void save_rubrics(const std::filesystem::path& path, const RubricSet& rubrics);
RubricSet load_rubrics(const std::filesystem::path& path);

}  // namespace citing
