#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citing/json_io.hpp"
#include "citing/providers/provider.hpp"
#include "citing/records.hpp"
#include "citing/rubrics.hpp"

namespace citing {

/// dot(a, b) / (|a| |b|), clamped to [-1, 1]. Throws DataError on a dimension
/// mismatch or a zero vector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Embeddings of the instructions that already carry a category's criteria.
struct CategoryEmbeddingIndex {
  int category_id = 0;
  std::vector<EmbeddingVector> vectors;
  std::vector<std::string> source_ids;
  std::size_t dimension = 0;

  void validate() const;
};

struct IndexOptions {
  /// Keep at most this many exemplars per category, smallest ids first.
  std::optional<std::size_t> exemplar_cap;
  /// Also index records that arrive with a category_id already set.
  bool include_labeled_records = false;
};

/// One index per category, in category order. Every exemplar id must resolve
/// in `records`; a category without exemplars is an error naming it.
std::vector<CategoryEmbeddingIndex> build_category_indexes(const RubricSet& rubrics,
                                                           const std::vector<InstructionRecord>& records,
                                                           const EmbeddingProvider& embedder,
                                                           const IndexOptions& options = {});

/// Mean of cosine(query, v) over the index, summed in index order with
/// Neumaier compensation.
double score_category(const EmbeddingVector& query, const CategoryEmbeddingIndex& index);

struct CategoryScore {
  int category_id = 0;
  double score = 0.0;

  bool operator==(const CategoryScore&) const = default;
};

struct CriteriaAssignment {
  std::string record_id;
  int category_id = 0;
  double score = 0.0;
  /// One entry per category, ordered by category_id.
  std::vector<CategoryScore> all_scores;
  /// Another category reached the same winning score.
  bool tie = false;
  /// Copy of the input with category_id and criteria filled in.
  InstructionRecord record;
};

/// Scores every index and takes the highest score; equal scores go to the
/// lowest category_id regardless of index order.
CriteriaAssignment assign_from_embedding(const InstructionRecord& instruction, const EmbeddingVector& query,
                                         const RubricSet& rubrics,
                                         std::span<const CategoryEmbeddingIndex> indexes);

CriteriaAssignment assign_criteria(const InstructionRecord& instruction, const RubricSet& rubrics,
                                   std::span<const CategoryEmbeddingIndex> indexes,
                                   const EmbeddingProvider& embedder);

struct BatchAssignment {
  /// Input order; every record carries category_id and criteria.
  std::vector<InstructionRecord> records;
  /// Audit line per record: similarity scores, or the teacher label source.
  std::vector<Json> audit;
  std::size_t similarity_assigned = 0;
  std::size_t teacher_labeled = 0;
  /// Records that arrived with a category_id already set.
  std::size_t preassigned = 0;
};

/// Records that are induction exemplars take the teacher's category; records
/// that arrive labeled keep their label; the rest are matched by similarity.
BatchAssignment assign_criteria_batch(const std::vector<InstructionRecord>& records, const RubricSet& rubrics,
                                      std::span<const CategoryEmbeddingIndex> indexes,
                                      const EmbeddingProvider& embedder, std::size_t parallelism = 1);

Json assignment_to_json(const CriteriaAssignment& a);

}  // namespace citing
