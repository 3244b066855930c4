#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "citing/config.hpp"
#include "citing/json_io.hpp"
#include "citing/providers/factory.hpp"
#include "citing/trainer.hpp"

namespace citing {

/// Per-run record of which stages finished and what they wrote. Artifact
/// paths are relative to the run directory.
struct RunManifest {
  std::string run_name;
  std::string config_digest;
  /// Stage name -> artifacts, in completion order.
  std::vector<std::pair<std::string, Json>> completed;

  bool is_complete(const std::string& stage) const;
  const Json& artifacts(const std::string& stage) const;
  void mark(const std::string& stage, Json artifacts);
};

Json run_manifest_to_json(const RunManifest& manifest);
RunManifest run_manifest_from_json(const Json& j);

/// split, rubrics, assign, sft, round_1..round_N, infer, then judge when enabled.
std::vector<std::string> pipeline_stages(const PipelineConfig& config);

/// Exclusive advisory lock on `<dir>/.lock`, held for the object's lifetime.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

struct RunOptions {
  /// Continue an existing run directory; otherwise an existing manifest is an error.
  bool resume = false;
};

struct CurriculumRun {
  std::filesystem::path run_dir;
  RunManifest manifest;
  /// SFT model first, then one per curriculum round.
  std::vector<ModelRef> models;
};

/// Runs every stage not yet recorded in the manifest. Refuses to resume when
/// the stored config digest differs from `config`.
CurriculumRun run_curriculum(const PipelineConfig& config, const ProviderSet& providers, TrainerBackend& trainer,
                             const RunOptions& options = {});

/// `<run_dir>/ledger.jsonl`, creating the run directory if needed.
std::shared_ptr<RunLedger> open_run_ledger(const PipelineConfig& config);

/// Builds providers (with the run ledger) and the trainer from `config`.
CurriculumRun run_curriculum(const PipelineConfig& config, const RunOptions& options = {});

}  // namespace citing
