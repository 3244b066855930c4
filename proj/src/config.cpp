#include "citing/config.hpp"

#include <cstdlib>
#include <set>

#include "citing/digest.hpp"
#include "citing/error.hpp"

namespace citing {

namespace fs = std::filesystem;

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw DataError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw DataError("unknown key \"" + k + "\" in " + where);
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const Json::exception&) {
    throw DataError(where + "." + key + " has the wrong type");
  }
}

MockRule rule_from_json(const Json& j, const std::string& where) {
  check_keys(j, {"contains", "reply", "field_after", "field_before", "suffix"}, where);
  MockRule r;
  read(j, "contains", r.contains, where);
  if (j.contains("reply") && !j["reply"].is_null()) r.reply = j["reply"].get<std::string>();
  read(j, "field_after", r.field_after, where);
  read(j, "field_before", r.field_before, where);
  read(j, "suffix", r.suffix, where);
  if (!r.reply && r.field_after.empty()) {
    throw DataError(where + " needs either \"reply\" or \"field_after\"");
  }
  return r;
}

Json rule_to_json(const MockRule& r) {
  Json j;
  j["contains"] = r.contains;
  j["reply"] = r.reply ? Json(*r.reply) : Json(nullptr);
  j["field_after"] = r.field_after;
  j["field_before"] = r.field_before;
  j["suffix"] = r.suffix;
  return j;
}

ProviderConfig provider_from_json(const Json& j, const std::string& where, double default_temperature) {
  ProviderConfig p;
  p.temperature = default_temperature;
  if (j.is_null()) return p;
  check_keys(j, {"backend", "model", "api_base", "api_key_env", "temperature", "timeout_seconds",
                 "batch_size", "mock"},
             where);
  read(j, "backend", p.backend, where);
  read(j, "model", p.model, where);
  read(j, "api_base", p.api_base, where);
  read(j, "api_key_env", p.api_key_env, where);
  read(j, "temperature", p.temperature, where);
  read(j, "timeout_seconds", p.timeout_seconds, where);
  read(j, "batch_size", p.batch_size, where);
  if (p.backend != "mock" && p.backend != "openai") {
    throw DataError(where + ".backend must be \"mock\" or \"openai\"");
  }
  if (auto m = j.find("mock"); m != j.end() && !m->is_null()) {
    const auto mw = where + ".mock";
    check_keys(*m, {"mode", "script", "rules", "dimension"}, mw);
    read(*m, "mode", p.mock.mode, mw);
    read(*m, "script", p.mock.script, mw);
    read(*m, "dimension", p.mock.dimension, mw);
    if (auto r = m->find("rules"); r != m->end() && !r->is_null()) {
      std::size_t i = 0;
      for (const auto& rule : *r) p.mock.rules.push_back(rule_from_json(rule, mw + ".rules[" + std::to_string(i++) + "]"));
    }
    if (p.mock.mode != "generative" && p.mock.mode != "scripted" && p.mock.mode != "rules") {
      throw DataError(mw + ".mode must be generative, scripted or rules");
    }
  }
  return p;
}

Json provider_to_json(const ProviderConfig& p) {
  Json j;
  j["backend"] = p.backend;
  j["model"] = p.model;
  j["api_base"] = p.api_base;
  j["api_key_env"] = p.api_key_env;
  j["temperature"] = p.temperature;
  j["timeout_seconds"] = p.timeout_seconds;
  j["batch_size"] = p.batch_size;
  Json m;
  m["mode"] = p.mock.mode;
  m["script"] = p.mock.script;
  Json rules = Json::array();
  for (const auto& r : p.mock.rules) rules.push_back(rule_to_json(r));
  m["rules"] = std::move(rules);
  m["dimension"] = p.mock.dimension;
  j["mock"] = std::move(m);
  return j;
}

}  // namespace

fs::path PipelineConfig::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw DataError("invalid config: " + m); };
  if (run_name.empty() || run_name.find('/') != std::string::npos) fail("run_name must be a plain name");
  if (n_rounds < 0) fail("n_rounds must be >= 0");
  if (m_inference_rounds < 0) fail("m_inference_rounds must be >= 0");
  if (curriculum_sample_size < 0) fail("curriculum_sample_size must be >= 0");
  if (induction_sample_size < 0) fail("induction_sample_size must be >= 0");
  if (induction_retries < 0) fail("induction_retries must be >= 0");
  if (max_categories_hint && *max_categories_hint < 1) fail("max_categories_hint must be >= 1");
  for (double r : split_ratios) {
    if (r < 0.0) fail("split ratios must be non-negative");
  }
  if (split_ratios[0] + split_ratios[1] + split_ratios[2] <= 0.0) fail("split ratios must not all be zero");
  if (!(trainer_hyperparams.learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (trainer_hyperparams.sequence_length < 1) fail("sequence_length must be >= 1");
  if (trainer_hyperparams.epochs < 0) fail("epochs must be >= 0");
  if (trainer_hyperparams.max_new_tokens < 1) fail("max_new_tokens must be >= 1");
  if (student_prompt_template != "bare" && student_prompt_template != "with_context") {
    fail("student_prompt_template must be \"bare\" or \"with_context\"");
  }
  if (revision_failure_threshold < 0.0 || revision_failure_threshold > 1.0) {
    fail("revision_failure_threshold must lie in [0, 1]");
  }
  if (judge_settings.skip_threshold < 0.0 || judge_settings.skip_threshold > 1.0) {
    fail("judge.skip_threshold must lie in [0, 1]");
  }
  if (retry.max_attempts < 1) fail("retry.max_attempts must be >= 1");
  if (trainer.backend != "mock" && trainer.backend != "subprocess") {
    fail("trainer.backend must be \"mock\" or \"subprocess\"");
  }
  if (trainer.backend == "subprocess" && trainer.command.empty()) fail("trainer.command is required for subprocess");
}

PipelineConfig config_from_json(const Json& j, const fs::path& base_dir) {
  const std::string w = "config";
  check_keys(j, {"run_name", "run_root", "dataset", "n_rounds", "m_inference_rounds",
                 "curriculum_sample_size", "curriculum_seed", "split_ratios", "split_seed",
                 "induction_sample_size", "induction_seed", "induction_retries",
                 "max_categories_hint", "exemplar_cap", "induction_temperature",
                 "student_prompt_template", "revision_field_prefix", "revision_failure_threshold", "max_parallel_calls",
                 "trainer_hyperparams", "retry", "cache_dir", "providers", "trainer", "judge"},
             w);
  PipelineConfig c;
  c.base_dir = base_dir;
  read(j, "run_name", c.run_name, w);
  std::string s;
  if (read(j, "run_root", s, w), !s.empty()) c.run_root = s;
  s.clear();
  if (read(j, "dataset", s, w), !s.empty()) c.dataset = s;
  read(j, "n_rounds", c.n_rounds, w);
  read(j, "m_inference_rounds", c.m_inference_rounds, w);
  read(j, "curriculum_sample_size", c.curriculum_sample_size, w);
  read(j, "split_seed", c.split_seed, w);
  c.curriculum_seed = c.split_seed;
  c.induction_seed = c.split_seed;
  read(j, "curriculum_seed", c.curriculum_seed, w);
  read(j, "induction_seed", c.induction_seed, w);
  if (auto r = j.find("split_ratios"); r != j.end() && !r->is_null()) {
    if (r->is_string()) {
      c.split_ratios = parse_split_ratios(r->get<std::string>());
    } else {
      auto v = r->get<std::vector<double>>();
      if (v.size() != 3) throw DataError("config.split_ratios needs three numbers");
      c.split_ratios = {v[0], v[1], v[2]};
    }
  }
  read(j, "induction_sample_size", c.induction_sample_size, w);
  read(j, "induction_retries", c.induction_retries, w);
  if (j.contains("max_categories_hint") && !j["max_categories_hint"].is_null()) {
    c.max_categories_hint = j["max_categories_hint"].get<int>();
  }
  if (j.contains("exemplar_cap") && !j["exemplar_cap"].is_null()) {
    c.exemplar_cap = j["exemplar_cap"].get<std::size_t>();
  }
  read(j, "induction_temperature", c.induction_temperature, w);
  read(j, "student_prompt_template", c.student_prompt_template, w);
  read(j, "revision_field_prefix", c.revision_field_prefix, w);
  read(j, "revision_failure_threshold", c.revision_failure_threshold, w);
  read(j, "max_parallel_calls", c.max_parallel_calls, w);
  s.clear();
  if (read(j, "cache_dir", s, w), !s.empty()) c.cache_dir = fs::path(s);

  if (auto h = j.find("trainer_hyperparams"); h != j.end() && !h->is_null()) {
    const auto hw = w + ".trainer_hyperparams";
    check_keys(*h, {"sequence_length", "epochs", "learning_rate", "max_new_tokens"}, hw);
    read(*h, "sequence_length", c.trainer_hyperparams.sequence_length, hw);
    read(*h, "epochs", c.trainer_hyperparams.epochs, hw);
    read(*h, "learning_rate", c.trainer_hyperparams.learning_rate, hw);
    read(*h, "max_new_tokens", c.trainer_hyperparams.max_new_tokens, hw);
  }
  if (auto r = j.find("retry"); r != j.end() && !r->is_null()) {
    const auto rw = w + ".retry";
    check_keys(*r, {"max_attempts", "base_delay_ms", "max_delay_ms"}, rw);
    read(*r, "max_attempts", c.retry.max_attempts, rw);
    long long ms = c.retry.base_delay.count();
    read(*r, "base_delay_ms", ms, rw);
    c.retry.base_delay = std::chrono::milliseconds(ms);
    ms = c.retry.max_delay.count();
    read(*r, "max_delay_ms", ms, rw);
    c.retry.max_delay = std::chrono::milliseconds(ms);
  }
  Json providers = j.value("providers", Json::object());
  check_keys(providers, {"teacher", "student", "embedder", "judge"}, w + ".providers");
  c.teacher = provider_from_json(providers.value("teacher", Json()), w + ".providers.teacher", 0.7);
  c.student = provider_from_json(providers.value("student", Json()), w + ".providers.student", 0.0);
  c.embedder = provider_from_json(providers.value("embedder", Json()), w + ".providers.embedder", 0.0);
  c.judge = provider_from_json(providers.value("judge", Json()), w + ".providers.judge", 0.0);
  if (c.teacher.model.empty()) c.teacher.model = "teacher";
  if (c.judge.model.empty()) c.judge.model = "judge";
  if (c.embedder.model.empty()) c.embedder.model = "embedder";

  if (auto t = j.find("trainer"); t != j.end() && !t->is_null()) {
    const auto tw = w + ".trainer";
    check_keys(*t, {"backend", "command", "timeout_seconds", "env_passthrough", "seed", "base_model"}, tw);
    read(*t, "backend", c.trainer.backend, tw);
    read(*t, "command", c.trainer.command, tw);
    read(*t, "timeout_seconds", c.trainer.timeout_seconds, tw);
    read(*t, "env_passthrough", c.trainer.env_passthrough, tw);
    c.trainer.seed = c.split_seed;
    read(*t, "seed", c.trainer.seed, tw);
    read(*t, "base_model", c.trainer.base_model, tw);
  } else {
    c.trainer.seed = c.split_seed;
  }
  if (auto js = j.find("judge"); js != j.end() && !js->is_null()) {
    const auto jw = w + ".judge";
    check_keys(*js, {"enabled", "metrics", "seed", "both_orders", "round_over_round", "skip_threshold"}, jw);
    read(*js, "enabled", c.judge_settings.enabled, jw);
    read(*js, "metrics", c.judge_settings.metrics, jw);
    read(*js, "seed", c.judge_settings.seed, jw);
    read(*js, "both_orders", c.judge_settings.both_orders, jw);
    read(*js, "round_over_round", c.judge_settings.round_over_round, jw);
    read(*js, "skip_threshold", c.judge_settings.skip_threshold, jw);
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  auto j = read_json_file(path);
  return config_from_json(j, fs::absolute(path).parent_path());
}

Json config_to_json(const PipelineConfig& c) {
  Json j;
  j["run_name"] = c.run_name;
  j["dataset"] = c.dataset.string();
  j["n_rounds"] = c.n_rounds;
  j["m_inference_rounds"] = c.m_inference_rounds;
  j["curriculum_sample_size"] = c.curriculum_sample_size;
  j["curriculum_seed"] = c.curriculum_seed;
  j["split_ratios"] = Json::array({c.split_ratios[0], c.split_ratios[1], c.split_ratios[2]});
  j["split_seed"] = c.split_seed;
  j["induction_sample_size"] = c.induction_sample_size;
  j["induction_seed"] = c.induction_seed;
  j["induction_retries"] = c.induction_retries;
  j["max_categories_hint"] = c.max_categories_hint ? Json(*c.max_categories_hint) : Json(nullptr);
  j["exemplar_cap"] = c.exemplar_cap ? Json(*c.exemplar_cap) : Json(nullptr);
  j["induction_temperature"] = c.induction_temperature;
  j["student_prompt_template"] = c.student_prompt_template;
  j["revision_field_prefix"] = c.revision_field_prefix;
  j["revision_failure_threshold"] = c.revision_failure_threshold;
  j["trainer_hyperparams"] = Json{{"sequence_length", c.trainer_hyperparams.sequence_length},
                                  {"epochs", c.trainer_hyperparams.epochs},
                                  {"learning_rate", c.trainer_hyperparams.learning_rate},
                                  {"max_new_tokens", c.trainer_hyperparams.max_new_tokens}};
  j["retry"] = Json{{"max_attempts", c.retry.max_attempts},
                    {"base_delay_ms", c.retry.base_delay.count()},
                    {"max_delay_ms", c.retry.max_delay.count()}};
  j["providers"] = Json{{"teacher", provider_to_json(c.teacher)},
                        {"student", provider_to_json(c.student)},
                        {"embedder", provider_to_json(c.embedder)},
                        {"judge", provider_to_json(c.judge)}};
  j["trainer"] = Json{{"backend", c.trainer.backend},
                      {"command", c.trainer.command},
                      {"timeout_seconds", c.trainer.timeout_seconds},
                      {"env_passthrough", c.trainer.env_passthrough},
                      {"seed", c.trainer.seed},
                      {"base_model", c.trainer.base_model}};
  j["judge"] = Json{{"enabled", c.judge_settings.enabled},
                    {"metrics", c.judge_settings.metrics},
                    {"seed", c.judge_settings.seed},
                    {"both_orders", c.judge_settings.both_orders},
                    {"round_over_round", c.judge_settings.round_over_round},
                    {"skip_threshold", c.judge_settings.skip_threshold}};
  return j;
}

std::string config_digest(const PipelineConfig& config) {
  return sha256_hex(dump_line(config_to_json(config)));
}

void apply_environment(PipelineConfig& c) {
  auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  for (ProviderConfig* p : {&c.teacher, &c.student, &c.embedder, &c.judge}) {
    if (p->backend != "openai") continue;
    if (p->api_base.empty()) p->api_base = env("CITING_API_BASE");
    if (p->api_key.empty()) {
      p->api_key = p->api_key_env.empty() ? env("CITING_API_KEY") : env(p->api_key_env.c_str());
    }
  }
  if (!c.cache_dir) {
    auto dir = env("CITING_CACHE_DIR");
    if (!dir.empty()) c.cache_dir = fs::path(dir);
  }
}

}  // namespace citing
