#include <gtest/gtest.h>

#include "citing/error.hpp"
#include "citing/pipeline.hpp"
#include "helpers.hpp"

namespace citing {
namespace {

using testing::data_dir;
using testing::TempDir;

PipelineConfig small_config(const TempDir& dir, int rounds) {
  PipelineConfig c;
  c.run_name = "unit";
  c.run_root = dir.path();
  c.dataset = data_dir() / "alpaca_tiny.json";
  c.n_rounds = rounds;
  c.m_inference_rounds = 1;
  c.curriculum_sample_size = 10;
  c.induction_sample_size = 12;
  c.split_ratios = parse_split_ratios("8:1:1");
  c.trainer_hyperparams.epochs = 1;
  return c;
}

struct Counted {
  std::shared_ptr<FunctionChatBackend> teacher;
  std::shared_ptr<FunctionChatBackend> student;
  std::shared_ptr<FunctionChatBackend> judge;
  ProviderSet set;

  std::size_t calls() const { return teacher->calls() + student->calls() + judge->calls(); }
};

Counted counted_providers(const PipelineConfig& config) {
  Counted c;
  auto t = std::make_shared<MockTeacherBackend>();
  auto s = std::make_shared<GenerativeChatBackend>();
  auto j = std::make_shared<GenerativeJudgeBackend>();
  c.teacher = std::make_shared<FunctionChatBackend>("teacher", [t](const ChatRequest& r) { return t->complete(r); });
  c.student = std::make_shared<FunctionChatBackend>("student", [s](const ChatRequest& r) { return s->complete(r); });
  c.judge = std::make_shared<FunctionChatBackend>("judge", [j](const ChatRequest& r) { return j->complete(r); });
  c.set = testing::provider_set(open_run_ledger(config), c.teacher, c.student, c.judge);
  return c;
}

class FailingOnce : public TrainerBackend {
 public:
  explicit FailingOnce(std::string fail_job) : fail_job_(std::move(fail_job)) {}
  std::string id() const override { return "mock-trainer"; }
  void run(const TrainJob& job) override {
    if (job.job_id == fail_job_ && !failed_) {
      failed_ = true;
      throw TrainerError("simulated trainer crash");
    }
    inner_.run(job);
  }

 private:
  std::string fail_job_;
  bool failed_ = false;
  MockTrainerBackend inner_;
};

TEST(Stages, OrderFollowsConfig) {
  PipelineConfig c;
  c.n_rounds = 2;
  EXPECT_EQ(pipeline_stages(c),
            (std::vector<std::string>{"split", "rubrics", "assign", "sft", "round_1", "round_2", "infer", "judge"}));
  c.n_rounds = 0;
  c.judge_settings.enabled = false;
  EXPECT_EQ(pipeline_stages(c), (std::vector<std::string>{"split", "rubrics", "assign", "sft", "infer"}));
}

TEST(Manifest, JsonRoundTrip) {
  RunManifest m;
  m.run_name = "x";
  m.config_digest = "abc";
  m.mark("split", Json{{"train", "split/train.jsonl"}});
  m.mark("rubrics", Json::object());
  const auto back = run_manifest_from_json(run_manifest_to_json(m));
  EXPECT_EQ(back.run_name, "x");
  ASSERT_EQ(back.completed.size(), 2u);
  EXPECT_TRUE(back.is_complete("split"));
  EXPECT_FALSE(back.is_complete("sft"));
  EXPECT_EQ(back.artifacts("split")["train"], "split/train.jsonl");
  EXPECT_THROW(back.artifacts("sft"), PipelineError);
}

TEST(Run, ZeroRoundsYieldsOnlyTheSupervisedModel) {
  TempDir dir;
  const auto config = small_config(dir, 0);
  auto p = counted_providers(config);
  MockTrainerBackend trainer;
  const auto run = run_curriculum(config, p.set, trainer);
  ASSERT_EQ(run.models.size(), 1u);
  EXPECT_EQ(run.models[0].round, 0);
  EXPECT_EQ(run.models[0].parent, "base-model");
  EXPECT_FALSE(std::filesystem::exists(run.run_dir / "round_1.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(run.run_dir / "infer/citing.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(run.run_dir / "judge/report.md"));
}

TEST(Run, ModelLineageAndArtifacts) {
  TempDir dir;
  const auto config = small_config(dir, 2);
  auto p = counted_providers(config);
  MockTrainerBackend trainer;
  const auto run = run_curriculum(config, p.set, trainer);
  ASSERT_EQ(run.models.size(), 3u);
  for (int t = 1; t <= 2; ++t) {
    EXPECT_EQ(run.models[t].round, t);
    EXPECT_EQ(run.models[t].parent, run.models[t - 1].locator);
    const auto file = run.run_dir / ("round_" + std::to_string(t) + ".jsonl");
    const auto report = validate_training_file(file);
    EXPECT_TRUE(report.ok()) << report.summary();
    EXPECT_EQ(report.round, t);
    EXPECT_EQ(report.examples, 10u);
    EXPECT_EQ(load_model_ref(run.run_dir / ("models/" + std::to_string(t) + ".json")), run.models[t]);
  }
  EXPECT_EQ(validate_training_file(run.run_dir / "sft.jsonl").round, 0);
  const auto manifest = run_manifest_from_json(read_json_file(run.run_dir / "manifest.json"));
  EXPECT_EQ(manifest.completed.size(), pipeline_stages(config).size());
  EXPECT_EQ(manifest.config_digest, config_digest(config));
}

TEST(Run, ResumeOfFinishedRunMakesNoCalls) {
  TempDir dir;
  const auto config = small_config(dir, 1);
  MockTrainerBackend trainer;
  {
    auto p = counted_providers(config);
    run_curriculum(config, p.set, trainer);
    EXPECT_GT(p.calls(), 0u);
  }
  const auto ledger_before = read_text_file(config.run_dir() / "ledger.jsonl");
  auto p = counted_providers(config);
  const auto run = run_curriculum(config, p.set, trainer, RunOptions{true});
  EXPECT_EQ(p.calls(), 0u);
  EXPECT_EQ(run.models.size(), 2u);
  EXPECT_EQ(read_text_file(config.run_dir() / "ledger.jsonl"), ledger_before);
}

TEST(Run, RefusesExistingRunWithoutResumeAndChangedConfig) {
  TempDir dir;
  auto config = small_config(dir, 1);
  MockTrainerBackend trainer;
  {
    auto p = counted_providers(config);
    run_curriculum(config, p.set, trainer);
  }
  {
    auto p = counted_providers(config);
    EXPECT_THROW(run_curriculum(config, p.set, trainer), PipelineError);
  }
  config.n_rounds = 2;
  auto p = counted_providers(config);
  try {
    run_curriculum(config, p.set, trainer, RunOptions{true});
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("config digest"), std::string::npos);
  }
  EXPECT_EQ(p.calls(), 0u);
}

TEST(Run, OperationalSettingsDoNotChangeTheDigest) {
  TempDir dir;
  auto a = small_config(dir, 1);
  auto b = a;
  b.max_parallel_calls = 16;
  b.run_root = dir.path() / "elsewhere";
  EXPECT_EQ(config_digest(a), config_digest(b));
  b.curriculum_seed = 9;
  EXPECT_NE(config_digest(a), config_digest(b));
}

TEST(Run, TrainerFailureResumesAtTheFailedRound) {
  TempDir dir;
  const auto config = small_config(dir, 2);
  FailingOnce trainer("round_2");
  {
    auto p = counted_providers(config);
    EXPECT_THROW(run_curriculum(config, p.set, trainer), TrainerError);
  }
  const auto partial = run_manifest_from_json(read_json_file(config.run_dir() / "manifest.json"));
  EXPECT_TRUE(partial.is_complete("round_1"));
  EXPECT_FALSE(partial.is_complete("round_2"));

  auto p = counted_providers(config);
  const auto run = run_curriculum(config, p.set, trainer, RunOptions{true});
  ASSERT_EQ(run.models.size(), 3u);
  // Round-2 generations and revisions were already on disk; only inference
  // and judging call the models again.
  EXPECT_EQ(p.teacher->calls(), 0u);
  EXPECT_GT(p.student->calls(), 0u);

  TempDir clean;
  auto fresh_config = small_config(clean, 2);
  auto fresh = counted_providers(fresh_config);
  MockTrainerBackend ok;
  const auto reference = run_curriculum(fresh_config, fresh.set, ok);
  EXPECT_EQ(run.models[2].locator, reference.models[2].locator);
  EXPECT_EQ(read_text_file(run.run_dir / "infer/citing.jsonl"), read_text_file(reference.run_dir / "infer/citing.jsonl"));
}

TEST(Run, ConcurrentWriterIsRefused) {
  TempDir dir;
  const auto config = small_config(dir, 1);
  std::filesystem::create_directories(config.run_dir());
  RunLock held(config.run_dir());
  auto p = counted_providers(config);
  MockTrainerBackend trainer;
  try {
    run_curriculum(config, p.set, trainer);
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("in use"), std::string::npos);
  }
}

}  // namespace
}  // namespace citing
