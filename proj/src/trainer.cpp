#include "citing/trainer.hpp"

#include <cstdlib>
#include <cstring>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "citing/digest.hpp"
#include "citing/error.hpp"

extern char** environ;

namespace citing {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

std::string relative_to(const fs::path& p, const fs::path& root) {
  if (root.empty()) return p.generic_string();
  std::error_code ec;
  auto rel = fs::relative(p, root, ec);
  return ec || rel.empty() ? p.generic_string() : rel.generic_string();
}

}  // namespace

void ModelRef::validate() const {
  if (round < -1) throw DataError("model round must be >= -1");
  if (locator.empty()) throw DataError("model locator is empty");
  if (round >= 0 && !parent) throw DataError("model at round " + std::to_string(round) + " has no parent");
}

Json model_ref_to_json(const ModelRef& ref) {
  return Json{{"round", ref.round},
              {"backend_id", ref.backend_id},
              {"locator", ref.locator},
              {"parent", ref.parent ? Json(*ref.parent) : Json(nullptr)}};
}

ModelRef model_ref_from_json(const Json& j) {
  ModelRef r;
  try {
    r.round = j.at("round").get<int>();
    r.backend_id = j.value("backend_id", std::string());
    r.locator = j.at("locator").get<std::string>();
    if (j.contains("parent") && !j["parent"].is_null()) r.parent = j["parent"].get<std::string>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed model reference: ") + e.what());
  }
  r.validate();
  return r;
}

ModelRef load_model_ref(const fs::path& path) { return model_ref_from_json(read_json_file(path)); }

std::string TrainingFileReport::summary() const {
  if (ok()) return "ok, " + std::to_string(examples) + " examples";
  std::string s;
  if (examples == 0 && violations.empty()) s = "file has no examples";
  for (const auto& v : violations) {
    if (!s.empty()) s += "; ";
    s += "line " + std::to_string(v.line) + ": " + v.message;
  }
  return s;
}

TrainingFileReport validate_training_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read training file " + path.string());
  TrainingFileReport report;
  report.digest = file_sha256_hex(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto violation = [&](std::string m) { report.violations.push_back({lineno, std::move(m)}); };
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error&) {
      violation("not valid JSON");
      continue;
    }
    if (!j.is_object()) {
      violation("not a JSON object");
      continue;
    }
    ++report.examples;
    auto nonempty = [&](const char* key) {
      auto it = j.find(key);
      if (it == j.end() || !it->is_string()) {
        violation(std::string("missing ") + key);
      } else if (it->get<std::string>().empty()) {
        violation(std::string("empty ") + key);
      }
    };
    nonempty("prompt");
    nonempty("completion");
    auto meta = j.find("meta");
    if (meta == j.end() || !meta->is_object()) {
      violation("missing meta");
      continue;
    }
    if (!meta->contains("record_id") || !(*meta)["record_id"].is_string()) violation("missing meta.record_id");
    if (!meta->contains("round") || !(*meta)["round"].is_number_integer()) {
      violation("missing meta.round");
      continue;
    }
    const int round = (*meta)["round"].get<int>();
    if (!report.round) {
      report.round = round;
    } else if (*report.round != round) {
      violation("mixed rounds (" + std::to_string(*report.round) + " and " + std::to_string(round) + ")");
    }
  }
  return report;
}

std::vector<std::string> trainer_arguments(const TrainJob& job) {
  return {"--train-file", job.train_file.string(),
          "--base-model", job.base.locator,
          "--out-dir",    job.out_dir.string(),
          "--seq-len",    std::to_string(job.hyperparams.sequence_length),
          "--epochs",     std::to_string(job.hyperparams.epochs),
          "--lr",         format_number(job.hyperparams.learning_rate),
          "--seed",       std::to_string(job.seed)};
}

void write_mock_training_outputs(const fs::path& train_file, const std::string& base_locator,
                                 const fs::path& out_dir, const TrainerHyperparams& hp) {
  const auto report = validate_training_file(train_file);
  if (!report.ok()) throw TrainerError("invalid training file: " + report.summary());
  const auto seq_len = static_cast<std::size_t>(hp.sequence_length);
  std::int64_t masked = 0;
  std::int64_t targets = 0;
  for (const auto& line : read_jsonl_file(train_file)) {
    const auto prompt = words(line["prompt"].get<std::string>());
    const auto completion = words(line["completion"].get<std::string>());
    // The whole completion is kept; the prompt loses tokens from its left edge.
    const auto completion_len = std::min(completion.size(), seq_len);
    const auto prompt_len = std::min(prompt.size(), seq_len - completion_len);
    masked += static_cast<std::int64_t>(prompt_len);
    targets += static_cast<std::int64_t>(completion_len);
  }
  const auto& d = report.digest;
  const double initial = 2.0 + static_cast<double>(std::stoul(d.substr(0, 2), nullptr, 16)) / 255.0;
  fs::create_directories(out_dir);
  write_json_file(out_dir / "model_ref.json",
                  Json{{"locator", base_locator + "+" + d.substr(0, 12)},
                       {"parent", base_locator},
                       {"round", *report.round}});
  write_json_file(out_dir / "metrics.json",
                  Json{{"train_loss_initial", initial},
                       {"train_loss_final", initial * 0.4},
                       {"examples_seen", static_cast<std::int64_t>(hp.epochs) * static_cast<std::int64_t>(report.examples)},
                       {"wall_seconds", 0.0},
                       {"masked_prompt_tokens", masked},
                       {"target_tokens", targets},
                       {"adapter_policy", "none"}});
}

void MockTrainerBackend::run(const TrainJob& job) {
  write_mock_training_outputs(job.train_file, job.base.locator, job.out_dir, job.hyperparams);
}

SubprocessTrainerBackend::SubprocessTrainerBackend(std::vector<std::string> command, std::chrono::seconds timeout,
                                                   std::vector<std::string> env_passthrough,
                                                   const std::atomic<bool>* cancel)
    : command_(std::move(command)), timeout_(timeout), env_passthrough_(std::move(env_passthrough)), cancel_(cancel) {
  if (command_.empty()) throw DataError("subprocess trainer needs a command");
}

std::string SubprocessTrainerBackend::id() const { return "subprocess:" + fs::path(command_.front()).filename().string(); }

void SubprocessTrainerBackend::run(const TrainJob& job) {
  fs::create_directories(job.out_dir);
  std::vector<std::string> args = command_;
  for (auto& a : trainer_arguments(job)) args.push_back(std::move(a));
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  std::vector<std::string> env_storage;
  std::vector<std::string> names{"PATH"};
  names.insert(names.end(), env_passthrough_.begin(), env_passthrough_.end());
  for (const auto& name : names) {
    if (const char* v = std::getenv(name.c_str())) env_storage.push_back(name + "=" + v);
  }
  std::vector<char*> envp;
  for (auto& e : env_storage) envp.push_back(e.data());
  envp.push_back(nullptr);

  const auto log_path = (job.out_dir / "trainer.log").string();
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw TrainerError("cannot start trainer \"" + command_.front() + "\": " + std::strerror(rc));

  const auto start = std::chrono::steady_clock::now();
  int status = 0;
  for (;;) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) throw TrainerError(std::string("waitpid failed: ") + std::strerror(errno));
    const bool timed_out = timeout_.count() > 0 && std::chrono::steady_clock::now() - start > timeout_;
    const bool cancelled = cancel_ && cancel_->load();
    if (timed_out || cancelled) {
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw TrainerError(std::string("trainer ") + (timed_out ? "timed out" : "was cancelled") + " (job " +
                         job.job_id + ")");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    throw TrainerError("trainer exited with status " + std::to_string(code) + " (job " + job.job_id +
                       "), see " + log_path);
  }
}

std::unique_ptr<TrainerBackend> make_trainer_backend(const TrainerConfig& config) {
  if (config.backend == "subprocess") {
    return std::make_unique<SubprocessTrainerBackend>(config.command, std::chrono::seconds(config.timeout_seconds),
                                                      config.env_passthrough);
  }
  return std::make_unique<MockTrainerBackend>();
}

TrainResult run_training(TrainerBackend& backend, const TrainJob& job, RunLedger* ledger,
                         const fs::path& ledger_root) {
  job.base.validate();
  if (job.hyperparams.sequence_length < 1 || job.hyperparams.epochs < 1 || !(job.hyperparams.learning_rate > 0.0)) {
    throw TrainerError("job " + job.job_id + ": hyperparameters must be positive");
  }
  if (!fs::exists(job.train_file)) throw TrainerError("job " + job.job_id + ": training file does not exist");
  const auto report = validate_training_file(job.train_file);
  if (!report.ok()) throw TrainerError("job " + job.job_id + ": " + report.summary());

  std::error_code ec;
  fs::remove(job.out_dir / "model_ref.json", ec);
  fs::remove(job.out_dir / "metrics.json", ec);
  fs::create_directories(job.out_dir);

  Json event{{"event", "train"},
             {"job_id", job.job_id},
             {"backend", backend.id()},
             {"base", job.base.locator},
             {"train_file", relative_to(job.train_file, ledger_root)},
             {"train_file_digest", report.digest},
             {"examples", report.examples},
             {"seq_len", job.hyperparams.sequence_length},
             {"epochs", job.hyperparams.epochs},
             {"lr", job.hyperparams.learning_rate},
             {"seed", job.seed}};
  try {
    backend.run(job);

    const auto ref_path = job.out_dir / "model_ref.json";
    const auto metrics_path = job.out_dir / "metrics.json";
    if (!fs::exists(ref_path)) throw TrainerError("job " + job.job_id + ": backend did not write model_ref.json");
    if (!fs::exists(metrics_path)) throw TrainerError("job " + job.job_id + ": backend did not write metrics.json");

    TrainResult result;
    try {
      const auto ref = read_json_file(ref_path);
      result.model.locator = ref.at("locator").get<std::string>();
      if (!ref.contains("parent") || ref["parent"].is_null()) throw TrainerError("model_ref.json has no parent");
      result.model.parent = ref.at("parent").get<std::string>();
      result.model.round = ref.at("round").get<int>();
      result.model.backend_id = backend.id();

      const auto m = read_json_file(metrics_path);
      result.metrics.train_loss_initial = m.at("train_loss_initial").get<double>();
      result.metrics.train_loss_final = m.at("train_loss_final").get<double>();
      result.metrics.examples_seen = m.at("examples_seen").get<std::int64_t>();
      result.metrics.wall_seconds = m.at("wall_seconds").get<double>();
      result.metrics.masked_prompt_tokens = m.at("masked_prompt_tokens").get<std::int64_t>();
      result.metrics.target_tokens = m.at("target_tokens").get<std::int64_t>();
      for (const auto& [k, v] : m.items()) {
        if (k != "train_loss_initial" && k != "train_loss_final" && k != "examples_seen" && k != "wall_seconds" &&
            k != "masked_prompt_tokens" && k != "target_tokens") {
          result.metrics.extra[k] = v;
        }
      }
    } catch (const Json::exception& e) {
      throw TrainerError("job " + job.job_id + ": backend outputs break the contract: " + e.what());
    } catch (const DataError& e) {
      throw TrainerError("job " + job.job_id + ": " + e.what());
    }
    if (result.model.locator.empty()) throw TrainerError("job " + job.job_id + ": empty locator");
    if (result.model.parent != job.base.locator) {
      throw TrainerError("job " + job.job_id + ": model parent \"" + result.model.parent.value_or("") +
                         "\" does not match base \"" + job.base.locator + "\"");
    }
    if (report.round && result.model.round != *report.round) {
      throw TrainerError("job " + job.job_id + ": model round " + std::to_string(result.model.round) +
                         " does not match the training file round " + std::to_string(*report.round));
    }
    const auto expected_seen =
        static_cast<std::int64_t>(job.hyperparams.epochs) * static_cast<std::int64_t>(report.examples);
    if (result.metrics.examples_seen != expected_seen) {
      throw TrainerError("job " + job.job_id + ": examples_seen " + std::to_string(result.metrics.examples_seen) +
                         " != epochs x lines = " + std::to_string(expected_seen));
    }
    if (ledger) {
      event["status"] = "ok";
      event["model"] = model_ref_to_json(result.model);
      event["metrics"] = read_json_file(metrics_path);
      ledger->record(std::move(event));
    }
    return result;
  } catch (const std::exception& e) {
    if (ledger) {
      event["status"] = "error";
      event["error"] = e.what();
      ledger->record(std::move(event));
    }
    throw;
  }
}

}  // namespace citing
