#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "citing/config.hpp"
#include "citing/json_io.hpp"
#include "citing/providers/ledger.hpp"

namespace citing {

/// Opaque handle to a model. Round -1 is the base model, 0 the supervised
/// model, k >= 1 the k-th curriculum model.
struct ModelRef {
  int round = -1;
  std::string backend_id;
  std::string locator;
  std::optional<std::string> parent;

  bool operator==(const ModelRef&) const = default;
  void validate() const;
};

Json model_ref_to_json(const ModelRef& ref);
ModelRef model_ref_from_json(const Json& j);
ModelRef load_model_ref(const std::filesystem::path& path);

struct TrainJob {
  ModelRef base;
  std::filesystem::path train_file;
  TrainerHyperparams hyperparams;
  std::filesystem::path out_dir;
  std::string job_id;
  std::uint64_t seed = 0;
};

struct TrainMetrics {
  double train_loss_initial = 0.0;
  double train_loss_final = 0.0;
  std::int64_t examples_seen = 0;
  double wall_seconds = 0.0;
  std::int64_t masked_prompt_tokens = 0;
  std::int64_t target_tokens = 0;
  /// Any additional keys the backend reported.
  Json extra = Json::object();
};

struct TrainResult {
  ModelRef model;
  TrainMetrics metrics;
};

struct FileViolation {
  std::size_t line = 0;
  std::string message;
};

struct TrainingFileReport {
  std::size_t examples = 0;
  std::optional<int> round;
  std::string digest;
  std::vector<FileViolation> violations;

  bool ok() const { return violations.empty() && examples > 0; }
  std::string summary() const;
};

/// Every line must parse, carry non-empty prompt and completion, and share a
/// single meta.round. Throws DataError only when the file cannot be read.
TrainingFileReport validate_training_file(const std::filesystem::path& path);

/// argv tail of the subprocess contract, in contract order.
std::vector<std::string> trainer_arguments(const TrainJob& job);

/// Produces `<out_dir>/model_ref.json` and `<out_dir>/metrics.json`.
class TrainerBackend {
 public:
  virtual ~TrainerBackend() = default;
  virtual std::string id() const = 0;
  virtual void run(const TrainJob& job) = 0;
};

/// In-process stand-in: the locator is `<base locator>+<first 12 hex digits of
/// the train-file digest>`, examples_seen is epochs x lines, and losses are a
/// fixed function of the digest.
class MockTrainerBackend : public TrainerBackend {
 public:
  std::string id() const override { return "mock-trainer"; }
  void run(const TrainJob& job) override;
};

/// Shared by MockTrainerBackend and the standalone mock trainer executable.
void write_mock_training_outputs(const std::filesystem::path& train_file, const std::string& base_locator,
                                 const std::filesystem::path& out_dir, const TrainerHyperparams& hyperparams);

/// Runs `command + trainer_arguments(job)` with stdout/stderr captured in
/// `<out_dir>/trainer.log`. The child sees PATH plus the passthrough variables.
class SubprocessTrainerBackend : public TrainerBackend {
 public:
  SubprocessTrainerBackend(std::vector<std::string> command, std::chrono::seconds timeout,
                           std::vector<std::string> env_passthrough,
                           const std::atomic<bool>* cancel = nullptr);
  std::string id() const override;
  void run(const TrainJob& job) override;

 private:
  std::vector<std::string> command_;
  std::chrono::seconds timeout_;
  std::vector<std::string> env_passthrough_;
  const std::atomic<bool>* cancel_;
};

std::unique_ptr<TrainerBackend> make_trainer_backend(const TrainerConfig& config);

/// Validates the job, runs the backend, then checks both output files against
/// the contract (parent == base locator, examples_seen == epochs x lines).
TrainResult run_training(TrainerBackend& backend, const TrainJob& job, RunLedger* ledger = nullptr,
                         const std::filesystem::path& ledger_root = {});

}  // namespace citing
