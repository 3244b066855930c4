#include "citing/matching.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "citing/error.hpp"
#include "citing/providers/parallel.hpp"

namespace citing {

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw DataError("cosine similarity dimension mismatch: " + std::to_string(a.dimension()) + " vs " +
                    std::to_string(b.dimension()));
  }
  if (a.dimension() == 0) throw DataError("cosine similarity of empty vectors");
  double dot = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  if (aa == 0.0 || bb == 0.0) throw DataError("cosine similarity with a zero vector");
  const double c = dot / (std::sqrt(aa) * std::sqrt(bb));
  return std::clamp(c, -1.0, 1.0);
}

void CategoryEmbeddingIndex::validate() const {
  if (vectors.empty()) throw DataError("category " + std::to_string(category_id) + " index is empty");
  if (vectors.size() != source_ids.size()) {
    throw DataError("category " + std::to_string(category_id) + " index ids are not aligned with vectors");
  }
  for (const auto& v : vectors) {
    if (v.dimension() != dimension) {
      throw DataError("category " + std::to_string(category_id) + " index has mixed dimensions");
    }
  }
}

std::vector<CategoryEmbeddingIndex> build_category_indexes(const RubricSet& rubrics,
                                                           const std::vector<InstructionRecord>& records,
                                                           const EmbeddingProvider& embedder,
                                                           const IndexOptions& options) {
  std::unordered_map<std::string, const InstructionRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);

  std::vector<std::vector<std::string>> members(rubrics.categories.size());
  for (const auto& c : rubrics.categories) {
    auto& ids = members[static_cast<std::size_t>(c.category_id)];
    ids = c.exemplar_ids;
    if (options.include_labeled_records) {
      for (const auto& r : records) {
        if (r.category_id == c.category_id) ids.push_back(r.id);
      }
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (options.exemplar_cap && ids.size() > *options.exemplar_cap) ids.resize(*options.exemplar_cap);
    if (ids.empty()) {
      throw DataError("category " + std::to_string(c.category_id) + " (\"" + c.name + "\") has no exemplars");
    }
  }

  std::vector<std::string> texts;
  for (const auto& ids : members) {
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("exemplar id \"" + id + "\" not found in the dataset");
      texts.push_back(it->second->instruction);
    }
  }
  const auto vectors = embedder.embed(texts);

  std::vector<CategoryEmbeddingIndex> out;
  std::size_t cursor = 0;
  for (std::size_t c = 0; c < members.size(); ++c) {
    CategoryEmbeddingIndex idx;
    idx.category_id = static_cast<int>(c);
    idx.source_ids = members[c];
    for (std::size_t k = 0; k < members[c].size(); ++k) idx.vectors.push_back(vectors[cursor++]);
    idx.dimension = idx.vectors.front().dimension();
    idx.validate();
    out.push_back(std::move(idx));
  }
  return out;
}

double score_category(const EmbeddingVector& query, const CategoryEmbeddingIndex& index) {
  if (index.vectors.empty()) {
    throw DataError("cannot score against empty category " + std::to_string(index.category_id));
  }
  double sum = 0.0;
  double compensation = 0.0;
  for (const auto& v : index.vectors) {
    const double term = cosine_similarity(query, v);
    const double t = sum + term;
    if (std::abs(sum) >= std::abs(term)) {
      compensation += (sum - t) + term;
    } else {
      compensation += (term - t) + sum;
    }
    sum = t;
  }
  const double mean = (sum + compensation) / static_cast<double>(index.vectors.size());
  return std::clamp(mean, -1.0, 1.0);
}

CriteriaAssignment assign_from_embedding(const InstructionRecord& instruction, const EmbeddingVector& query,
                                         const RubricSet& rubrics,
                                         std::span<const CategoryEmbeddingIndex> indexes) {
  if (indexes.empty()) throw DataError("no category indexes to assign against");
  if (instruction.instruction.empty()) throw DataError("cannot assign criteria to an empty instruction");
  CriteriaAssignment a;
  a.record_id = instruction.id;
  for (const auto& idx : indexes) a.all_scores.push_back({idx.category_id, score_category(query, idx)});
  std::sort(a.all_scores.begin(), a.all_scores.end(),
            [](const CategoryScore& x, const CategoryScore& y) { return x.category_id < y.category_id; });
  for (std::size_t i = 1; i < a.all_scores.size(); ++i) {
    if (a.all_scores[i].category_id == a.all_scores[i - 1].category_id) {
      throw DataError("duplicate index for category " + std::to_string(a.all_scores[i].category_id));
    }
  }
  const CategoryScore* best = &a.all_scores.front();
  for (const auto& s : a.all_scores) {
    if (s.score > best->score) best = &s;
  }
  a.category_id = best->category_id;
  a.score = best->score;
  a.tie = std::count_if(a.all_scores.begin(), a.all_scores.end(),
                        [&](const CategoryScore& s) { return s.score == best->score; }) > 1;
  a.record = instruction;
  a.record.category_id = a.category_id;
  a.record.criteria = rubrics.category(a.category_id).criteria;
  return a;
}

CriteriaAssignment assign_criteria(const InstructionRecord& instruction, const RubricSet& rubrics,
                                   std::span<const CategoryEmbeddingIndex> indexes,
                                   const EmbeddingProvider& embedder) {
  if (instruction.instruction.empty()) throw DataError("cannot assign criteria to an empty instruction");
  return assign_from_embedding(instruction, embedder.embed_one(instruction.instruction), rubrics, indexes);
}

Json assignment_to_json(const CriteriaAssignment& a) {
  Json scores = Json::array();
  for (const auto& s : a.all_scores) scores.push_back(Json{{"category_id", s.category_id}, {"score", s.score}});
  return Json{{"record_id", a.record_id},
              {"category_id", a.category_id},
              {"score", a.score},
              {"tie", a.tie},
              {"source", "similarity"},
              {"all_scores", std::move(scores)}};
}

BatchAssignment assign_criteria_batch(const std::vector<InstructionRecord>& records, const RubricSet& rubrics,
                                      std::span<const CategoryEmbeddingIndex> indexes,
                                      const EmbeddingProvider& embedder, std::size_t parallelism) {
  std::unordered_map<std::string, int> teacher_label;
  for (const auto& c : rubrics.categories) {
    for (const auto& id : c.exemplar_ids) teacher_label.emplace(id, c.category_id);
  }

  BatchAssignment out;
  out.records = records;
  out.audit.resize(records.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = out.records[i];
    if (auto it = teacher_label.find(r.id); it != teacher_label.end()) {
      r.category_id = it->second;
      r.criteria = rubrics.category(it->second).criteria;
      out.audit[i] = Json{{"record_id", r.id}, {"category_id", it->second}, {"source", "teacher"}};
      ++out.teacher_labeled;
    } else if (r.category_id) {
      r.criteria = rubrics.category(*r.category_id).criteria;
      out.audit[i] = Json{{"record_id", r.id}, {"category_id", *r.category_id}, {"source", "input"}};
      ++out.preassigned;
    } else {
      pending.push_back(i);
    }
  }
  if (pending.empty()) return out;

  std::vector<std::string> texts;
  texts.reserve(pending.size());
  for (auto i : pending) texts.push_back(records[i].instruction);
  const auto queries = embedder.embed(texts);
  ordered_parallel_for(pending.size(), parallelism, nullptr, [&](std::size_t k) {
    const auto i = pending[k];
    auto a = assign_from_embedding(records[i], queries[k], rubrics, indexes);
    out.audit[i] = assignment_to_json(a);
    out.records[i] = std::move(a.record);
  });
  out.similarity_assigned = pending.size();
  return out;
}

}  // namespace citing
