#include "citing/pipeline.hpp"

#include <algorithm>
#include <map>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "citing/curriculum.hpp"
#include "citing/error.hpp"
#include "citing/judge.hpp"
#include "citing/matching.hpp"
#include "citing/providers/parallel.hpp"
#include "citing/records.hpp"
#include "citing/rubrics.hpp"
#include "citing/split.hpp"

namespace citing {

namespace fs = std::filesystem;

bool RunManifest::is_complete(const std::string& stage) const {
  return std::any_of(completed.begin(), completed.end(), [&](const auto& p) { return p.first == stage; });
}

const Json& RunManifest::artifacts(const std::string& stage) const {
  for (const auto& [name, a] : completed) {
    if (name == stage) return a;
  }
  throw PipelineError("stage " + stage + " has not completed");
}

void RunManifest::mark(const std::string& stage, Json artifacts) {
  for (auto& [name, a] : completed) {
    if (name == stage) {
      a = std::move(artifacts);
      return;
    }
  }
  completed.emplace_back(stage, std::move(artifacts));
}

Json run_manifest_to_json(const RunManifest& m) {
  Json stages = Json::object();
  for (const auto& [name, a] : m.completed) stages[name] = Json{{"complete", true}, {"artifacts", a}};
  return Json{{"run_name", m.run_name}, {"config_digest", m.config_digest}, {"stages", std::move(stages)}};
}

RunManifest run_manifest_from_json(const Json& j) {
  RunManifest m;
  try {
    m.run_name = j.at("run_name").get<std::string>();
    m.config_digest = j.at("config_digest").get<std::string>();
    for (const auto& [name, s] : j.at("stages").items()) {
      if (s.value("complete", false)) m.completed.emplace_back(name, s.value("artifacts", Json::object()));
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

std::vector<std::string> pipeline_stages(const PipelineConfig& config) {
  std::vector<std::string> s{"split", "rubrics", "assign", "sft"};
  for (int t = 1; t <= config.n_rounds; ++t) s.push_back("round_" + std::to_string(t));
  s.push_back("infer");
  if (config.judge_settings.enabled) s.push_back("judge");
  return s;
}

RunLock::RunLock(const fs::path& dir) {
  fs::create_directories(dir);
  const auto path = (dir / ".lock").string();
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw PipelineError("cannot open lock file " + path);
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw PipelineError("run directory " + dir.string() + " is in use by another process");
  }
}

RunLock::~RunLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::shared_ptr<RunLedger> open_run_ledger(const PipelineConfig& config) {
  fs::create_directories(config.run_dir());
  return std::make_shared<RunLedger>(config.run_dir() / "ledger.jsonl");
}

namespace {

std::vector<InstructionRecord> read_records(const fs::path& path) {
  std::vector<InstructionRecord> out;
  for (const auto& line : read_jsonl_file(path)) out.push_back(record_from_json(line));
  return out;
}

void write_responses(const fs::path& path, const std::vector<InstructionRecord>& records,
                     const std::vector<std::string>& responses) {
  std::vector<Json> lines;
  for (std::size_t i = 0; i < records.size(); ++i) {
    lines.push_back(Json{{"id", records[i].id}, {"instruction", records[i].instruction}, {"response", responses[i]}});
  }
  write_jsonl_file(path, lines);
}

class Runner {
 public:
  Runner(const PipelineConfig& config, const ProviderSet& providers, TrainerBackend& trainer)
      : config_(config), providers_(providers), trainer_(trainer), dir_(config.run_dir()),
        style_(parse_student_prompt(config.student_prompt_template)) {
    tmpl_.field_prefix = config.revision_field_prefix;
  }

  CurriculumRun run(const RunOptions& options) {
    fs::create_directories(dir_);
    RunLock lock(dir_);
    const auto digest = config_digest(config_);
    const auto manifest_path = dir_ / "manifest.json";
    if (fs::exists(manifest_path)) {
      if (!options.resume) {
        throw PipelineError("run directory " + dir_.string() + " already holds a run; pass --resume to continue it");
      }
      manifest_ = run_manifest_from_json(read_json_file(manifest_path));
      if (manifest_.config_digest != digest) {
        throw PipelineError("config digest " + digest.substr(0, 12) + " differs from the run's " +
                            manifest_.config_digest.substr(0, 12) + "; refusing to resume with a changed config");
      }
    } else {
      manifest_.run_name = config_.run_name;
      manifest_.config_digest = digest;
      write_json_file(dir_ / "config.json", config_to_json(config_));
      save();
    }

    stage("split", [&] { return do_split(); });
    stage("rubrics", [&] { return do_rubrics(); });
    stage("assign", [&] { return do_assign(); });
    stage("sft", [&] { return do_sft(); });
    for (int t = 1; t <= config_.n_rounds; ++t) {
      stage("round_" + std::to_string(t), [&] { return do_round(t); });
    }
    stage("infer", [&] { return do_infer(); });
    if (config_.judge_settings.enabled) stage("judge", [&] { return do_judge(); });

    CurriculumRun out;
    out.run_dir = dir_;
    out.manifest = manifest_;
    out.models = load_models(config_.n_rounds);
    return out;
  }

 private:
  template <typename Fn>
  void stage(const std::string& name, Fn&& fn) {
    if (manifest_.is_complete(name)) return;
    manifest_.mark(name, fn());
    save();
  }

  void save() { write_json_file(dir_ / "manifest.json", run_manifest_to_json(manifest_)); }

  std::string rel(const fs::path& p) const { return fs::relative(p, dir_).generic_string(); }

  std::size_t parallelism() const { return std::max<std::size_t>(1, config_.max_parallel_calls); }

  Json do_split() {
    auto records = load_dataset_any(config_.resolve(config_.dataset));
    validate_records(records);
    auto split = split_dataset(std::move(records), config_.split_ratios, config_.split_seed);
    fs::create_directories(dir_ / "split");
    save_records_jsonl(dir_ / "split/train.jsonl", split.train);
    save_records_jsonl(dir_ / "split/validation.jsonl", split.validation);
    save_records_jsonl(dir_ / "split/test.jsonl", split.test);
    return Json{{"train", "split/train.jsonl"},
                {"validation", "split/validation.jsonl"},
                {"test", "split/test.jsonl"},
                {"counts", {split.train.size(), split.validation.size(), split.test.size()}}};
  }

  const std::vector<InstructionRecord>& train() {
    if (!train_) train_ = read_records(dir_ / "split/train.jsonl");
    return *train_;
  }

  const RubricSet& rubrics() {
    if (!rubrics_) rubrics_ = load_rubrics(dir_ / "rubrics.json");
    return *rubrics_;
  }

  const std::vector<InstructionRecord>& assigned() {
    if (!assigned_) assigned_ = read_records(dir_ / "assigned.jsonl");
    return *assigned_;
  }

  const std::vector<CategoryEmbeddingIndex>& indexes() {
    if (!indexes_) {
      IndexOptions io;
      io.exemplar_cap = config_.exemplar_cap;
      indexes_ = build_category_indexes(rubrics(), train(), *providers_.embedder, io);
    }
    return *indexes_;
  }

  Json do_rubrics() {
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(config_.induction_sample_size), train().size());
    const auto subset = sample_for_induction(train(), k, config_.induction_seed);
    InductionOptions io;
    io.model = config_.teacher.model;
    io.temperature = config_.induction_temperature;
    io.prompt.max_categories_hint = config_.max_categories_hint;
    auto result = induce_rubrics(*providers_.teacher, subset, config_.induction_retries, io);
    save_rubrics(dir_ / "rubrics.json", result.rubrics);
    rubrics_ = result.rubrics;
    return Json{{"rubrics", "rubrics.json"},
                {"categories", result.rubrics.categories.size()},
                {"unassigned", result.unassigned_ids},
                {"teacher_calls", result.teacher_calls}};
  }

  void write_assignment(const BatchAssignment& batch, const fs::path& records_path, const fs::path& scores_path) {
    save_records_jsonl(records_path, batch.records);
    write_jsonl_file(scores_path, batch.audit);
  }

  Json do_assign() {
    auto batch = assign_criteria_batch(train(), rubrics(), indexes(), *providers_.embedder, parallelism());
    write_assignment(batch, dir_ / "assigned.jsonl", dir_ / "assigned.scores.jsonl");
    assigned_ = batch.records;
    return Json{{"assigned", "assigned.jsonl"},
                {"scores", "assigned.scores.jsonl"},
                {"similarity_assigned", batch.similarity_assigned},
                {"teacher_labeled", batch.teacher_labeled},
                {"preassigned", batch.preassigned}};
  }

  ModelRef train_model(const std::string& job_id, const ModelRef& base, const fs::path& file, int round) {
    TrainJob job;
    job.base = base;
    job.train_file = file;
    job.hyperparams = config_.trainer_hyperparams;
    job.out_dir = dir_ / "trainer" / job_id;
    job.job_id = job_id;
    job.seed = config_.trainer.seed;
    auto result = run_training(trainer_, job, providers_.ledger.get(), dir_);
    if (result.model.round != round) {
      throw TrainerError("job " + job_id + " produced a round " + std::to_string(result.model.round) +
                         " model, expected round " + std::to_string(round));
    }
    fs::create_directories(dir_ / "models");
    write_json_file(dir_ / "models" / (std::to_string(round) + ".json"), model_ref_to_json(result.model));
    return result.model;
  }

  ModelRef base_model() const {
    return ModelRef{-1, trainer_.id(), config_.trainer.base_model, std::nullopt};
  }

  Json do_sft() {
    const auto manifest = emit_sft_file(train(), dir_ / "sft.jsonl", style_);
    const auto model = train_model("sft", base_model(), manifest.path, 0);
    return Json{{"file", manifest_to_json(manifest, dir_)}, {"model", "models/0.json"}, {"locator", model.locator}};
  }

  ModelRef model(int round) { return load_model_ref(dir_ / "models" / (std::to_string(round) + ".json")); }

  std::vector<ModelRef> load_models(int n) {
    std::vector<ModelRef> out;
    for (int r = 0; r <= n; ++r) out.push_back(model(r));
    return out;
  }

  std::vector<InstructionRecord> curriculum_sample() {
    auto sample = sample_curriculum(assigned(), static_cast<std::size_t>(config_.curriculum_sample_size),
                                    config_.curriculum_seed);
    const auto path = dir_ / "curriculum_sample.json";
    if (!fs::exists(path)) {
      Json ids = Json::array();
      for (const auto& r : sample) ids.push_back(r.id);
      write_json_file(path, Json{{"seed", config_.curriculum_seed}, {"ids", std::move(ids)}});
    }
    return sample;
  }

  Json do_round(int t) {
    const int k = t - 1;
    const auto student_model = model(k);
    const auto sample = curriculum_sample();
    const auto round_file = dir_ / ("round_" + std::to_string(t) + ".jsonl");
    const auto report_path = dir_ / "revisions" / ("round_" + std::to_string(t) + ".report.json");
    const auto generations = dir_ / "generations" / ("round_" + std::to_string(t) + ".jsonl");

    // A crash during training leaves a complete round file behind; reuse it
    // rather than asking the teacher again.
    if (fs::exists(round_file) && fs::exists(report_path)) {
      const auto existing = validate_training_file(round_file);
      if (existing.ok() && existing.round == t) {
        const auto report = read_json_file(report_path);
        const TrainingFileManifest file{round_file, existing.examples, t, existing.digest};
        const auto trained = train_model("round_" + std::to_string(t), student_model, round_file, t);
        return Json{{"generations", rel(generations)},
                    {"revision_report", rel(report_path)},
                    {"dropped", report.value("dropped", Json(0))},
                    {"file", manifest_to_json(file, dir_)},
                    {"model", "models/" + std::to_string(t) + ".json"},
                    {"locator", trained.locator}};
      }
    }

    fs::create_directories(dir_ / "generations");
    GenerationOptions go;
    go.model = student_model.locator;
    go.temperature = config_.student.temperature;
    go.max_new_tokens = config_.trainer_hyperparams.max_new_tokens;
    go.style = style_;
    go.parallelism = parallelism();
    go.partial_path = generations;
    const auto responses = generate_initial_responses(*providers_.student, sample, go);

    std::vector<RevisionItem> items;
    items.reserve(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) {
      if (!sample[i].criteria) throw PipelineError("record " + sample[i].id + " has no assigned criteria");
      items.push_back({sample[i].id, sample[i].instruction, *sample[i].criteria, responses[i].response});
    }
    RevisionOptions ro;
    ro.model = config_.teacher.model;
    ro.temperature = config_.teacher.temperature;
    ro.max_new_tokens = config_.trainer_hyperparams.max_new_tokens;
    ro.failure_threshold = config_.revision_failure_threshold;
    ro.parallelism = parallelism();
    ro.tmpl = tmpl_;
    auto outcome = revise_responses(*providers_.teacher, items, ro);
    fs::create_directories(dir_ / "revisions");

    std::vector<CurriculumExample> examples;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (outcome.revised[i]) examples.push_back(make_curriculum_example(items[i], *outcome.revised[i], k, tmpl_));
    }
    const auto file = emit_training_file(examples, round_file);
    write_json_file(report_path, outcome.report());
    const auto trained = train_model("round_" + std::to_string(t), student_model, file.path, t);
    return Json{{"generations", rel(*go.partial_path)},
                {"revision_report", rel(report_path)},
                {"dropped", outcome.failures.size()},
                {"file", manifest_to_json(file, dir_)},
                {"model", "models/" + std::to_string(t) + ".json"},
                {"locator", trained.locator}};
  }

  std::vector<InstructionRecord> test_assigned() {
    const auto path = dir_ / "infer/test_assigned.jsonl";
    if (fs::exists(path)) return read_records(path);
    auto test = read_records(dir_ / "split/test.jsonl");
    fs::create_directories(dir_ / "infer");
    if (test.empty()) {
      save_records_jsonl(path, {});
      return {};
    }
    auto batch = assign_criteria_batch(test, rubrics(), indexes(), *providers_.embedder, parallelism());
    write_assignment(batch, path, dir_ / "infer/test_assigned.scores.jsonl");
    return batch.records;
  }

  std::vector<RevisionChain> infer_chains(const ModelRef& m, const std::vector<InstructionRecord>& records) {
    InferenceOptions io;
    io.model = m.locator;
    io.temperature = config_.student.temperature;
    io.max_new_tokens = config_.trainer_hyperparams.max_new_tokens;
    io.style = style_;
    io.tmpl = tmpl_;
    std::vector<RevisionChain> chains(records.size());
    ordered_parallel_for(records.size(), parallelism(), providers_.ledger.get(), [&](std::size_t i) {
      chains[i] = infer_with_self_revision(*providers_.student, records[i], records[i].criteria.value_or(""),
                                           config_.m_inference_rounds, io);
    });
    return chains;
  }

  std::vector<std::string> answers(const std::vector<RevisionChain>& chains) {
    std::vector<std::string> out;
    for (const auto& c : chains) out.push_back(c.responses.empty() ? std::string() : c.responses.back());
    return out;
  }

  Json do_infer() {
    const auto test = test_assigned();
    const int n = config_.n_rounds;
    const auto final_model = model(n);
    const auto chains = infer_chains(final_model, test);
    std::vector<Json> lines;
    std::size_t truncated = 0;
    for (const auto& c : chains) {
      lines.push_back(chain_to_json(c));
      if (c.truncated()) ++truncated;
    }
    write_jsonl_file(dir_ / "infer/chains.jsonl", lines);
    write_responses(dir_ / "infer/citing.jsonl", test, answers(chains));

    // SFT baseline: the supervised model answering the plain student prompt.
    const auto sft_model = model(0);
    std::vector<std::string> sft(test.size());
    ordered_parallel_for(test.size(), parallelism(), providers_.ledger.get(), [&](std::size_t i) {
      sft[i] = providers_.student->chat(ChatRequest::single_turn(sft_model.locator,
                                                                 render_student_prompt(test[i], style_),
                                                                 config_.student.temperature,
                                                                 config_.trainer_hyperparams.max_new_tokens));
    });
    write_responses(dir_ / "infer/sft.jsonl", test, sft);

    Json rounds = Json::object();
    if (config_.judge_settings.round_over_round) {
      for (int t = 1; t < n; ++t) {
        const auto ch = infer_chains(model(t), test);
        const auto path = dir_ / "infer" / ("round_" + std::to_string(t) + ".jsonl");
        write_responses(path, test, answers(ch));
        rounds[std::to_string(t)] = rel(path);
      }
    }
    return Json{{"model", "models/" + std::to_string(n) + ".json"},
                {"records", test.size()},
                {"rounds", config_.m_inference_rounds},
                {"chains", "infer/chains.jsonl"},
                {"citing", "infer/citing.jsonl"},
                {"sft", "infer/sft.jsonl"},
                {"truncated", truncated},
                {"round_responses", std::move(rounds)}};
  }

  ComparisonReport compare(const fs::path& a, const fs::path& b, const std::string& label_a,
                           const std::string& label_b, const std::string& subdir) {
    auto pairs = load_response_pairs(a, b);
    pairs.erase(std::remove_if(pairs.begin(), pairs.end(),
                               [](const auto& p) { return p.response_a.empty() || p.response_b.empty(); }),
                pairs.end());
    if (pairs.empty()) throw PipelineError("no response pairs to judge for " + label_a + " vs " + label_b);
    ComparisonOptions co;
    co.model = config_.judge.model;
    co.system_a = label_a;
    co.system_b = label_b;
    co.metrics.clear();
    for (const auto& m : config_.judge_settings.metrics) co.metrics.push_back(parse_metric(m));
    co.seed = config_.judge_settings.seed;
    co.both_orders = config_.judge_settings.both_orders;
    co.temperature = config_.judge.temperature;
    co.parallelism = parallelism();
    auto result = run_comparison(*providers_.judge, pairs, co);
    write_comparison(dir_ / "judge" / subdir, result);
    check_skip_rate(result, config_.judge_settings.skip_threshold);
    return result.report;
  }

  Json do_judge() {
    const auto test = read_records(dir_ / "infer/test_assigned.jsonl");
    if (test.empty()) return Json{{"skipped", "the test split is empty"}};
    std::vector<ComparisonReport> reports;
    Json dirs = Json::array();
    reports.push_back(compare(dir_ / "infer/citing.jsonl", dir_ / "infer/sft.jsonl", "CITING", "SFT", "citing_vs_sft"));
    dirs.push_back("judge/citing_vs_sft");
    if (config_.judge_settings.round_over_round) {
      const int n = config_.n_rounds;
      auto responses_of = [&](int t) {
        if (t == 0) return dir_ / "infer/sft.jsonl";
        if (t == n) return dir_ / "infer/citing.jsonl";
        return dir_ / "infer" / ("round_" + std::to_string(t) + ".jsonl");
      };
      for (int t = 1; t <= n; ++t) {
        const auto name = "round_" + std::to_string(t) + "_vs_round_" + std::to_string(t - 1);
        reports.push_back(compare(responses_of(t), responses_of(t - 1), "round " + std::to_string(t),
                                  t == 1 ? "SFT" : "round " + std::to_string(t - 1), name));
        dirs.push_back("judge/" + name);
      }
    }
    write_file_atomic(dir_ / "judge/report.md", render_report(reports, ReportLayout::Markdown));
    write_file_atomic(dir_ / "judge/report.json", render_report(reports, ReportLayout::Json));
    return Json{{"comparisons", std::move(dirs)}, {"report", "judge/report.md"}, {"report_json", "judge/report.json"}};
  }

  const PipelineConfig& config_;
  const ProviderSet& providers_;
  TrainerBackend& trainer_;
  fs::path dir_;
  StudentPrompt style_;
  RevisionTemplate tmpl_;
  RunManifest manifest_;
  std::optional<std::vector<InstructionRecord>> train_;
  std::optional<RubricSet> rubrics_;
  std::optional<std::vector<InstructionRecord>> assigned_;
  std::optional<std::vector<CategoryEmbeddingIndex>> indexes_;
};

}  // namespace

CurriculumRun run_curriculum(const PipelineConfig& config, const ProviderSet& providers, TrainerBackend& trainer,
                             const RunOptions& options) {
  config.validate();
  Runner runner(config, providers, trainer);
  return runner.run(options);
}

CurriculumRun run_curriculum(const PipelineConfig& config, const RunOptions& options) {
  config.validate();
  auto providers = make_providers(config, open_run_ledger(config));
  auto trainer = make_trainer_backend(config.trainer);
  return run_curriculum(config, providers, *trainer, options);
}

}  // namespace citing
