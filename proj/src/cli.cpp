#include "citing/cli.hpp"

#include <CLI11.hpp>

#include "citing/config.hpp"
#include "citing/curriculum.hpp"
#include "citing/error.hpp"
#include "citing/judge.hpp"
#include "citing/matching.hpp"
#include "citing/pipeline.hpp"
#include "citing/records.hpp"
#include "citing/rubrics.hpp"
#include "citing/split.hpp"
#include "citing/providers/parallel.hpp"

namespace citing {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string ledger;
  bool resume = false;
};

PipelineConfig load_cli_config(const Common& common) {
  auto config = common.config.empty() ? config_from_json(Json::object(), fs::current_path())
                                      : load_config(common.config);
  apply_environment(config);
  return config;
}

ProviderSet cli_providers(const PipelineConfig& config, const Common& common) {
  auto ledger = common.ledger.empty() ? std::make_shared<RunLedger>() : std::make_shared<RunLedger>(common.ledger);
  return make_providers(config, std::move(ledger));
}

std::vector<InstructionRecord> read_records_file(const fs::path& path) { return load_dataset_any(path); }

int cmd_split(const std::string& dataset, const std::string& ratios, std::uint64_t seed, const std::string& out_dir,
              std::ostream& out) {
  auto records = load_dataset_any(dataset);
  validate_records(records);
  auto split = split_dataset(std::move(records), parse_split_ratios(ratios), seed);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  save_records_jsonl(dir / "train.jsonl", split.train);
  save_records_jsonl(dir / "validation.jsonl", split.validation);
  save_records_jsonl(dir / "test.jsonl", split.test);
  out << "train " << split.train.size() << ", validation " << split.validation.size() << ", test "
      << split.test.size() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Curriculum instruction tuning pipeline", "citing"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  app.add_option("--ledger", common.ledger, "Append provider and trainer events to this file");
  app.add_flag("--resume", common.resume, "Continue an existing run directory");

  // dataset split
  auto* dataset = app.add_subcommand("dataset", "Dataset utilities");
  dataset->require_subcommand(1);
  auto* split = dataset->add_subcommand("split", "Seeded train/validation/test split");
  std::string split_dataset_path, split_ratios = "8:1:1", split_out;
  std::uint64_t split_seed = 0;
  split->add_option("--dataset", split_dataset_path, "Manifest, Alpaca JSON or records JSONL")->required();
  split->add_option("--ratios", split_ratios, "Ratios as a:b:c");
  split->add_option("--seed", split_seed, "Shuffle seed");
  split->add_option("--out", split_out, "Output directory")->required();

  // rubrics induce
  auto* rubrics = app.add_subcommand("rubrics", "Rubric induction");
  rubrics->require_subcommand(1);
  auto* induce = rubrics->add_subcommand("induce", "Ask the teacher to categorize a sample and write criteria");
  std::string induce_dataset, induce_out;
  std::optional<int> induce_sample;
  std::optional<std::uint64_t> induce_seed;
  induce->add_option("--dataset", induce_dataset, "Training records")->required();
  induce->add_option("--sample", induce_sample, "Number of instructions shown to the teacher");
  induce->add_option("--seed", induce_seed, "Sampling seed");
  induce->add_option("--out", induce_out, "Output rubrics JSON")->required();

  // criteria assign
  auto* criteria = app.add_subcommand("criteria", "Criteria matching");
  criteria->require_subcommand(1);
  auto* assign = criteria->add_subcommand("assign", "Attach the most similar category's criteria to each record");
  std::string assign_rubrics, assign_dataset, assign_exemplars, assign_out;
  assign->add_option("--rubrics", assign_rubrics, "Rubrics JSON")->required();
  assign->add_option("--dataset", assign_dataset, "Records to assign")->required();
  assign->add_option("--exemplars", assign_exemplars, "Records holding the rubric exemplars (default: --dataset)");
  assign->add_option("--out", assign_out, "Output records JSONL; scores go to <out>.scores.jsonl")->required();

  // curriculum run
  auto* curriculum = app.add_subcommand("curriculum", "Curriculum training");
  curriculum->require_subcommand(1);
  auto* run = curriculum->add_subcommand("run", "Run every pipeline stage into the run directory");
  std::optional<std::string> run_name, run_root, run_dataset;
  std::optional<int> run_rounds, run_infer_rounds;
  run->add_option("--run-name", run_name, "Override run_name");
  run->add_option("--run-root", run_root, "Override run_root");
  run->add_option("--dataset", run_dataset, "Override dataset");
  run->add_option("--rounds", run_rounds, "Override n_rounds");
  run->add_option("--infer-rounds", run_infer_rounds, "Override m_inference_rounds");

  // infer
  auto* infer = app.add_subcommand("infer", "Self-revision inference with a trained model");
  std::string infer_model, infer_dataset, infer_out, infer_rubrics, infer_exemplars;
  int infer_rounds = 1;
  infer->add_option("--model", infer_model, "Model reference JSON")->required()->check(CLI::ExistingFile);
  infer->add_option("--dataset", infer_dataset, "Records to answer")->required();
  infer->add_option("--rounds", infer_rounds, "Self-revision rounds")->check(CLI::NonNegativeNumber);
  infer->add_option("--out", infer_out, "Output chains JSONL")->required();
  infer->add_option("--rubrics", infer_rubrics, "Assign criteria to records that lack them");
  infer->add_option("--exemplars", infer_exemplars, "Records holding the rubric exemplars");

  // judge compare
  auto* judge = app.add_subcommand("judge", "Pairwise judging");
  judge->require_subcommand(1);
  auto* compare = judge->add_subcommand("compare", "Judge system A against system B");
  std::string compare_a, compare_b, compare_metrics = "articulate,in_depth,comprehensive", compare_out = "judge";
  std::string label_a = "A", label_b = "B";
  std::optional<std::uint64_t> compare_seed;
  bool both_orders = false;
  compare->add_option("--a", compare_a, "Responses of system A")->required()->check(CLI::ExistingFile);
  compare->add_option("--b", compare_b, "Responses of system B")->required()->check(CLI::ExistingFile);
  compare->add_option("--metrics", compare_metrics, "Comma-separated metrics");
  compare->add_option("--seed", compare_seed, "Presentation-order seed");
  compare->add_flag("--both-orders", both_orders, "Also judge the opposite order and report consistency");
  compare->add_option("--label-a", label_a, "Display label of system A");
  compare->add_option("--label-b", label_b, "Display label of system B");
  compare->add_option("--out", compare_out, "Output directory");

  // report render
  auto* report = app.add_subcommand("report", "Reports");
  report->require_subcommand(1);
  auto* render = report->add_subcommand("render", "Render one or more report.json files");
  std::vector<std::string> render_inputs;
  std::string render_layout = "markdown", render_out;
  render->add_option("--input", render_inputs, "report.json files")->required()->check(CLI::ExistingFile);
  render->add_option("--layout", render_layout, "markdown or json");
  render->add_option("--out", render_out, "Write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (split->parsed()) return cmd_split(split_dataset_path, split_ratios, split_seed, split_out, out);

    if (induce->parsed()) {
      auto config = load_cli_config(common);
      auto providers = cli_providers(config, common);
      const auto train = read_records_file(induce_dataset);
      const auto k = std::min<std::size_t>(induce_sample.value_or(config.induction_sample_size), train.size());
      const auto subset = sample_for_induction(train, k, induce_seed.value_or(config.induction_seed));
      InductionOptions io;
      io.model = config.teacher.model;
      io.temperature = config.induction_temperature;
      io.prompt.max_categories_hint = config.max_categories_hint;
      auto result = induce_rubrics(*providers.teacher, subset, config.induction_retries, io);
      save_rubrics(induce_out, result.rubrics);
      out << result.rubrics.categories.size() << " categories, " << result.unassigned_ids.size()
          << " sampled instructions unassigned\n";
      return 0;
    }

    if (assign->parsed()) {
      auto config = load_cli_config(common);
      auto providers = cli_providers(config, common);
      const auto rubric_set = load_rubrics(assign_rubrics);
      const auto records = read_records_file(assign_dataset);
      const auto exemplars = assign_exemplars.empty() ? records : read_records_file(assign_exemplars);
      IndexOptions io;
      io.exemplar_cap = config.exemplar_cap;
      const auto indexes = build_category_indexes(rubric_set, exemplars, *providers.embedder, io);
      auto batch = assign_criteria_batch(records, rubric_set, indexes, *providers.embedder, config.max_parallel_calls);
      save_records_jsonl(assign_out, batch.records);
      write_jsonl_file(assign_out + ".scores.jsonl", batch.audit);
      out << batch.similarity_assigned << " assigned by similarity, " << batch.teacher_labeled
          << " labeled by the teacher, " << batch.preassigned << " preassigned\n";
      return 0;
    }

    if (run->parsed()) {
      auto config = load_cli_config(common);
      if (run_name) config.run_name = *run_name;
      if (run_root) config.run_root = *run_root;
      if (run_dataset) config.dataset = fs::absolute(*run_dataset);
      if (run_rounds) config.n_rounds = *run_rounds;
      if (run_infer_rounds) config.m_inference_rounds = *run_infer_rounds;
      RunOptions options;
      options.resume = common.resume;
      auto result = run_curriculum(config, options);
      out << "run " << result.run_dir.string() << ": " << result.models.size() << " models, "
          << result.manifest.completed.size() << " stages complete\n";
      return 0;
    }

    if (infer->parsed()) {
      auto config = load_cli_config(common);
      auto providers = cli_providers(config, common);
      const auto model = load_model_ref(infer_model);
      auto records = read_records_file(infer_dataset);
      const bool missing = std::any_of(records.begin(), records.end(), [](const auto& r) { return !r.criteria; });
      if (missing) {
        if (infer_rubrics.empty()) throw UsageError("some records carry no criteria; pass --rubrics and --exemplars");
        const auto rubric_set = load_rubrics(infer_rubrics);
        const auto exemplars = infer_exemplars.empty() ? records : read_records_file(infer_exemplars);
        IndexOptions io;
        io.exemplar_cap = config.exemplar_cap;
        const auto indexes = build_category_indexes(rubric_set, exemplars, *providers.embedder, io);
        records = assign_criteria_batch(records, rubric_set, indexes, *providers.embedder, config.max_parallel_calls)
                      .records;
      }
      InferenceOptions io;
      io.model = model.locator;
      io.temperature = config.student.temperature;
      io.max_new_tokens = config.trainer_hyperparams.max_new_tokens;
      io.style = parse_student_prompt(config.student_prompt_template);
      io.tmpl.field_prefix = config.revision_field_prefix;
      std::vector<RevisionChain> chains(records.size());
      ordered_parallel_for(records.size(), config.max_parallel_calls, providers.ledger.get(), [&](std::size_t i) {
        chains[i] = infer_with_self_revision(*providers.student, records[i], records[i].criteria.value_or(""),
                                             infer_rounds, io);
      });
      std::vector<Json> lines;
      std::size_t truncated = 0;
      for (const auto& c : chains) {
        auto j = chain_to_json(c);
        j["id"] = c.record_id;
        lines.push_back(std::move(j));
        if (c.truncated()) ++truncated;
      }
      write_jsonl_file(infer_out, lines);
      out << chains.size() << " chains, " << truncated << " truncated\n";
      return 0;
    }

    if (compare->parsed()) {
      auto config = load_cli_config(common);
      auto providers = cli_providers(config, common);
      const auto pairs = load_response_pairs(compare_a, compare_b);
      ComparisonOptions co;
      co.model = config.judge.model;
      co.system_a = label_a;
      co.system_b = label_b;
      co.metrics = parse_metric_list(compare_metrics);
      co.seed = compare_seed.value_or(config.judge_settings.seed);
      co.both_orders = both_orders || config.judge_settings.both_orders;
      co.temperature = config.judge.temperature;
      co.parallelism = config.max_parallel_calls;
      auto result = run_comparison(*providers.judge, pairs, co);
      write_comparison(compare_out, result);
      out << render_report(result.report, ReportLayout::Markdown);
      check_skip_rate(result, config.judge_settings.skip_threshold);
      return 0;
    }

    if (render->parsed()) {
      std::vector<ComparisonReport> reports;
      for (const auto& p : render_inputs) {
        for (auto& r : load_reports(p)) reports.push_back(std::move(r));
      }
      const auto text = render_report(reports, parse_report_layout(render_layout));
      if (render_out.empty()) {
        out << text;
      } else {
        write_file_atomic(render_out, text);
      }
      return 0;
    }
  } catch (const UsageError& e) {
    err << "citing: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "citing: error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace citing
