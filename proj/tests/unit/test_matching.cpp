#include <gtest/gtest.h>

#include <random>

#include "citing/error.hpp"
#include "citing/matching.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace citing {
namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n;
  std::vector<double> v(dim);
  for (auto& x : v) x = n(rng);
  return v;
}

RubricSet two_categories() {
  RubricSet r;
  r.categories = {{0, "A", "criteria A", {"a1", "a2"}}, {1, "B", "criteria B", {"b1"}}};
  r.induction_sample_ids = {"a1", "a2", "b1"};
  return r;
}

TEST(Cosine, BasicProperties) {
  const EmbeddingVector a({1, 0, 0});
  const EmbeddingVector b({0, 2, 0});
  const EmbeddingVector c({-3, 0, 0});
  EXPECT_DOUBLE_EQ(cosine_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, c), -1.0);
  EXPECT_THROW(cosine_similarity(a, EmbeddingVector({1, 0})), DataError);
}

TEST(Cosine, AgreesWithOracle) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto x = random_vector(rng, 1 + i % 40);
    const auto y = random_vector(rng, 1 + i % 40);
    EXPECT_NEAR(cosine_similarity(EmbeddingVector(x), EmbeddingVector(y)), oracle::cosine(x, y), 1e-12);
  }
}

TEST(Score, MatchesOracleOnRandomIndexes) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const std::size_t dim = 2 + i % 30;
    CategoryEmbeddingIndex index;
    std::vector<std::vector<double>> raw;
    for (int k = 0; k < 1 + i % 20; ++k) {
      raw.push_back(random_vector(rng, dim));
      index.vectors.emplace_back(raw.back());
      index.source_ids.push_back(std::to_string(k));
    }
    index.dimension = dim;
    const auto q = random_vector(rng, dim);
    EXPECT_NEAR(score_category(EmbeddingVector(q), index), oracle::category_score(q, raw), 1e-9);
  }
}

TEST(Assign, TiesGoToLowestCategoryId) {
  const auto rubrics = two_categories();
  std::vector<CategoryEmbeddingIndex> indexes(2);
  indexes[0].category_id = 0;
  indexes[1].category_id = 1;
  for (auto& ix : indexes) {
    ix.vectors = {EmbeddingVector({1, 1})};
    ix.source_ids = {"x"};
    ix.dimension = 2;
  }
  std::swap(indexes[0], indexes[1]);
  const auto a = assign_from_embedding(testing::make_record("q", "q"), EmbeddingVector({1, 0}), rubrics, indexes);
  EXPECT_EQ(a.category_id, 0);
  EXPECT_TRUE(a.tie);
  EXPECT_EQ(a.record.criteria, "criteria A");
  ASSERT_EQ(a.all_scores.size(), 2u);
  EXPECT_EQ(a.all_scores[0].category_id, 0);
}

TEST(Assign, PicksTheMoreSimilarCategory) {
  const auto rubrics = two_categories();
  std::vector<CategoryEmbeddingIndex> indexes(2);
  indexes[0] = {0, {EmbeddingVector({1, 0}), EmbeddingVector({0.9, 0.1})}, {"a1", "a2"}, 2};
  indexes[1] = {1, {EmbeddingVector({0, 1})}, {"b1"}, 2};
  const auto a = assign_from_embedding(testing::make_record("q", "q"), EmbeddingVector({0.1, 1}), rubrics, indexes);
  EXPECT_EQ(a.category_id, 1);
  EXPECT_FALSE(a.tie);
}

TEST(Indexes, BuiltFromExemplarsWithCap) {
  const auto rubrics = two_categories();
  std::vector<InstructionRecord> records{testing::make_record("a1", "alpha"), testing::make_record("a2", "beta"),
                                         testing::make_record("b1", "gamma")};
  const auto embedder = testing::mock_embedder(16);
  IndexOptions options;
  options.exemplar_cap = 1;
  const auto indexes = build_category_indexes(rubrics, records, *embedder, options);
  ASSERT_EQ(indexes.size(), 2u);
  EXPECT_EQ(indexes[0].source_ids, (std::vector<std::string>{"a1"}));
  EXPECT_EQ(indexes[1].dimension, 16u);
}

TEST(Indexes, EmptyCategoryIsNamed) {
  auto rubrics = two_categories();
  rubrics.categories[1].exemplar_ids.clear();
  std::vector<InstructionRecord> records{testing::make_record("a1", "alpha"), testing::make_record("a2", "beta")};
  const auto embedder = testing::mock_embedder();
  try {
    build_category_indexes(rubrics, records, *embedder);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("B"), std::string::npos);
  }
}

TEST(Batch, LabelSourcesAndOrder) {
  const auto rubrics = two_categories();
  std::vector<InstructionRecord> records{testing::make_record("a1", "alpha"), testing::make_record("n1", "new one"),
                                         testing::make_record("b1", "gamma"), testing::make_record("a2", "beta"),
                                         testing::make_record("n2", "new two")};
  records[4].category_id = 1;
  records[4].criteria = "criteria B";
  const auto embedder = testing::mock_embedder();
  const auto indexes = build_category_indexes(rubrics, records, *embedder);
  const auto batch = assign_criteria_batch(records, rubrics, indexes, *embedder, 4);
  ASSERT_EQ(batch.records.size(), 5u);
  for (std::size_t i = 0; i < records.size(); ++i) EXPECT_EQ(batch.records[i].id, records[i].id);
  EXPECT_EQ(batch.records[0].category_id, 0);
  EXPECT_EQ(batch.records[2].category_id, 1);
  EXPECT_TRUE(batch.records[1].criteria.has_value());
  EXPECT_EQ(batch.teacher_labeled, 3u);
  EXPECT_EQ(batch.similarity_assigned, 1u);
  EXPECT_EQ(batch.preassigned, 1u);
  EXPECT_EQ(batch.audit[0]["source"], "teacher");
  EXPECT_EQ(batch.audit[1]["source"], "similarity");
  EXPECT_EQ(batch.audit[4]["source"], "input");
}

}  // namespace
}  // namespace citing
