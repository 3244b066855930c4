#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "citing/json_io.hpp"
#include "citing/providers/mock.hpp"
#include "citing/providers/retry.hpp"
#include "citing/split.hpp"

namespace citing {

struct TrainerHyperparams {
  int sequence_length = 512;
  int epochs = 4;
  double learning_rate = 1e-5;
  int max_new_tokens = 512;
};

struct MockSettings {
  /// "generative", "scripted" or "rules".
  std::string mode = "generative";
  std::map<std::string, std::string> script;
  std::vector<MockRule> rules;
  std::size_t dimension = 64;
};

/// One model endpoint. `backend` is "mock" or "openai".
struct ProviderConfig {
  std::string backend = "mock";
  std::string model;
  std::string api_base;
  /// Never serialized; filled from `api_key_env` or CITING_API_KEY.
  std::string api_key;
  std::string api_key_env;
  double temperature = 0.0;
  int timeout_seconds = 120;
  std::size_t batch_size = 64;
  MockSettings mock;
};

struct TrainerConfig {
  /// "mock" (in-process) or "subprocess".
  std::string backend = "mock";
  std::vector<std::string> command;
  int timeout_seconds = 0;
  std::vector<std::string> env_passthrough;
  std::uint64_t seed = 0;
  std::string base_model = "base-model";
};

struct JudgeSettings {
  bool enabled = true;
  std::vector<std::string> metrics{"articulate", "in_depth", "comprehensive"};
  std::uint64_t seed = 0;
  bool both_orders = false;
  /// Also judge every curriculum round against the previous one.
  bool round_over_round = false;
  double skip_threshold = 0.02;
};

struct PipelineConfig {
  /// Directory relative paths resolve against; not serialized.
  std::filesystem::path base_dir;
  std::string run_name = "run";
  std::filesystem::path run_root = "run";
  std::filesystem::path dataset;

  int n_rounds = 3;
  int m_inference_rounds = 1;
  int curriculum_sample_size = 1000;
  std::uint64_t curriculum_seed = 0;
  SplitRatios split_ratios = kDefaultSplitRatios;
  std::uint64_t split_seed = 0;
  int induction_sample_size = 100;
  std::uint64_t induction_seed = 0;
  int induction_retries = 2;
  std::optional<int> max_categories_hint;
  std::optional<std::size_t> exemplar_cap;
  double induction_temperature = 0.0;
  /// "bare" or "with_context".
  std::string student_prompt_template = "bare";
  /// Prepended to each labeled line of the revision prompt ("" or "## ").
  std::string revision_field_prefix;
  double revision_failure_threshold = 0.02;
  std::size_t max_parallel_calls = 4;
  TrainerHyperparams trainer_hyperparams;
  RetryPolicy retry;
  std::optional<std::filesystem::path> cache_dir;

  ProviderConfig teacher;
  ProviderConfig student;
  ProviderConfig embedder;
  ProviderConfig judge;
  TrainerConfig trainer;
  JudgeSettings judge_settings;

  /// Throws DataError when a count is negative, learning_rate <= 0, etc.
  void validate() const;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path run_dir() const { return resolve(run_root) / run_name; }
};

/// Defaults fill every absent key. Relative paths resolve against `base_dir`.
PipelineConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical form with every field spelled out. API keys and the operational
/// settings run_root, cache_dir and max_parallel_calls are omitted, so the
/// digest identifies what a run computes rather than where or how fast.
Json config_to_json(const PipelineConfig& config);

/// Digest of the canonical form, used to refuse resuming with a changed config.
std::string config_digest(const PipelineConfig& config);

/// Fills api_base/api_key from CITING_API_BASE / CITING_API_KEY (or the
/// provider's api_key_env) and cache_dir from CITING_CACHE_DIR when unset.
void apply_environment(PipelineConfig& config);

}  // namespace citing
