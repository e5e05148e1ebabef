#include "chunksel/config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "chunksel/errors.hpp"
#include "chunksel/rng.hpp"
#include "chunksel/toy_model.hpp"

namespace chunksel {
namespace {

namespace fs = std::filesystem;

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

fs::path resolve(const nlohmann::json& v, const fs::path& base) {
  fs::path p = v.get<std::string>();
  if (p.empty()) return p;
  if (p.is_relative()) p = base / p;
  return p.lexically_normal();
}

std::string path_string(const fs::path& p) { return p.generic_string(); }

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json caps_json(const Capabilities& c) {
  return {{"can_sample", c.can_sample}, {"can_score", c.can_score}, {"supports_n", c.supports_n}};
}

Capabilities caps_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"can_sample", "can_score", "supports_n"}, "capabilities");
  Capabilities c;
  c.can_sample = j.value("can_sample", true);
  c.can_score = j.value("can_score", true);
  c.supports_n = j.value("supports_n", true);
  return c;
}

BackendConfig backend_from_json(const nlohmann::json& j, const fs::path& base, const std::string& role) {
  if (!j.is_object()) throw ValidationError(role + ": expected an object");
  BackendConfig b;
  const std::string kind = j.value("kind", std::string("toy"));
  b.cold_started = j.value("cold_started", false);
  if (j.contains("capabilities")) b.toy_caps = caps_from_json(j.at("capabilities"));
  if (kind == "toy") {
    reject_unknown(j, {"kind", "toy_spec", "toy_fingerprint", "capabilities", "cold_started"}, role);
    b.kind = BackendConfig::Kind::Toy;
    if (!j.contains("toy_spec")) throw ValidationError(role + ": toy backend needs toy_spec");
    b.toy_spec = resolve(j.at("toy_spec"), base);
  } else if (kind == "remote") {
    b.kind = BackendConfig::Kind::Remote;
    auto endpoint = j;
    endpoint.erase("kind");
    endpoint.erase("cold_started");
    endpoint.erase("capabilities");
    reject_unknown(endpoint,
                   {"base_url", "model", "auth_token_env", "auth_token", "max_in_flight", "timeout_ms", "send_top_k",
                    "retry"},
                   role);
    b.remote = remote_config_from_json(endpoint);
  } else {
    throw ValidationError(role + ": unknown backend kind '" + kind + "'");
  }
  return b;
}

nlohmann::json backend_to_json(const BackendConfig& b, bool student) {
  nlohmann::json j;
  if (b.kind == BackendConfig::Kind::Toy) {
    j = {{"kind", "toy"}, {"toy_spec", path_string(b.toy_spec)}};
    // The file's content fingerprint lets a resume notice an edited model.
    try {
      j["toy_fingerprint"] = hex(stable_hash(read_file(b.toy_spec)));
    } catch (const ValidationError&) {
      j["toy_fingerprint"] = nullptr;
    }
  } else {
    j = to_json(b.remote);
    j["kind"] = "remote";
  }
  if (b.toy_caps) j["capabilities"] = caps_json(*b.toy_caps);
  if (student) j["cold_started"] = b.cold_started;
  return j;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  reject_unknown(j,
                 {"mode", "teacher", "student", "generation", "schedule", "strategy", "beam_width", "workers", "seed",
                  "prompt_prefix", "cold_start", "baseline", "paths"},
                 "config");
  RunConfig c;
  try {
    if (j.contains("mode")) c.mode = parse_data_mode(j.at("mode").get<std::string>());
    if (j.contains("teacher") && !j.at("teacher").is_null()) {
      c.teacher = backend_from_json(j.at("teacher"), base_dir, "teacher");
    }
    if (j.contains("student") && !j.at("student").is_null()) {
      c.student = backend_from_json(j.at("student"), base_dir, "student");
    }
    if (j.contains("generation")) {
      const auto& g = j.at("generation");
      reject_unknown(g, {"temperature", "top_p", "top_k", "max_generation_tokens", "chunk_size", "stop"},
                     "generation");
      c.generation.temperature = g.value("temperature", c.generation.temperature);
      c.generation.top_p = g.value("top_p", c.generation.top_p);
      c.generation.top_k = g.value("top_k", c.generation.top_k);
      c.generation.max_generation_tokens = g.value("max_generation_tokens", c.generation.max_generation_tokens);
      c.generation.chunk_size = g.value("chunk_size", c.generation.chunk_size);
      if (g.contains("stop")) c.generation.stop_markers = g.at("stop").get<std::vector<std::string>>();
    }
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      reject_unknown(s, {"head", "tail"}, "schedule");
      c.schedule = SamplingSchedule(s.value("head", c.schedule.head()), s.value("tail", c.schedule.tail()));
    }
    if (j.contains("strategy")) {
      const auto& s = j.at("strategy");
      reject_unknown(s, {"kind", "seed"}, "strategy");
      if (s.contains("kind")) c.strategy.kind = parse_strategy_kind(s.at("kind").get<std::string>());
      c.strategy.rng_seed = s.value("seed", c.strategy.rng_seed);
    }
    c.beam_width = j.value("beam_width", c.beam_width);
    c.workers = j.value("workers", c.workers);
    c.seed = j.value("seed", c.seed);
    if (!j.contains("strategy") || !j.at("strategy").contains("seed")) c.strategy.rng_seed = c.seed;
    c.prompt_prefix = j.value("prompt_prefix", c.prompt_prefix);
    if (j.contains("cold_start")) {
      const auto& s = j.at("cold_start");
      reject_unknown(s, {"attempts_per_problem", "target_count"}, "cold_start");
      c.cold_start_attempts = s.value("attempts_per_problem", c.cold_start_attempts);
      c.cold_start_target = s.value("target_count", c.cold_start_target);
    }
    if (j.contains("baseline")) {
      const auto& s = j.at("baseline");
      reject_unknown(s, {"samples_per_problem", "pool_chunk_size"}, "baseline");
      c.baseline_samples = s.value("samples_per_problem", c.baseline_samples);
      c.pool_chunk_size = s.value("pool_chunk_size", c.pool_chunk_size);
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      reject_unknown(p, {"problems", "pools", "output_dir", "exclude_run"}, "paths");
      if (p.contains("problems")) c.problems_path = resolve(p.at("problems"), base_dir);
      if (p.contains("pools")) c.pools_path = resolve(p.at("pools"), base_dir);
      if (p.contains("output_dir")) c.output_dir = resolve(p.at("output_dir"), base_dir);
      if (p.contains("exclude_run")) c.exclude_run = resolve(p.at("exclude_run"), base_dir);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cannot parse " + path.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = {
      {"mode", to_string(mode)},
      {"teacher", teacher ? backend_to_json(*teacher, false) : nlohmann::json(nullptr)},
      {"student", student ? backend_to_json(*student, true) : nlohmann::json(nullptr)},
      {"generation",
       {{"temperature", generation.temperature},
        {"top_p", generation.top_p},
        {"top_k", generation.top_k},
        {"max_generation_tokens", generation.max_generation_tokens},
        {"chunk_size", generation.chunk_size},
        {"stop", generation.stop_markers}}},
      {"schedule", {{"head", schedule.head()}, {"tail", schedule.tail()}}},
      {"strategy", {{"kind", to_string(strategy.kind)}, {"seed", strategy.rng_seed}}},
      {"beam_width", beam_width},
      {"workers", workers},
      {"seed", seed},
      {"prompt_prefix", prompt_prefix},
      {"cold_start", {{"attempts_per_problem", cold_start_attempts}, {"target_count", cold_start_target}}},
      {"baseline", {{"samples_per_problem", baseline_samples}, {"pool_chunk_size", pool_chunk_size}}},
      {"paths",
       {{"problems", path_string(problems_path)},
        {"pools", path_string(pools_path)},
        {"output_dir", path_string(output_dir)},
        {"exclude_run", path_string(exclude_run)}}},
  };
  return j;
}

void RunConfig::validate() const {
  generation.validate();
  if (beam_width < 1) throw ValidationError("beam_width must be >= 1");
  if (workers < 1) throw ValidationError("workers must be >= 1");
  if (problems_path.empty()) throw ValidationError("paths.problems is required");
  if (output_dir.empty()) throw ValidationError("paths.output_dir is required");
  const bool needs_teacher = mode == DataMode::ColdStart || mode == DataMode::SSD || mode == DataMode::StandardKD;
  const bool needs_student = mode == DataMode::SSD || mode == DataMode::SelfDistill || mode == DataMode::PoolSelect;
  if (needs_teacher && !teacher) throw ValidationError(std::string(to_string(mode)) + " mode needs a teacher backend");
  if (needs_student && !student) {
    throw ValidationError(std::string(to_string(mode)) + " mode needs a student backend");
  }
  if (mode == DataMode::SSD && !student->cold_started) {
    throw ValidationError("ssd mode needs a cold-started student (set student.cold_started after SFT on the "
                          "cold-start dataset)");
  }
  if (mode == DataMode::ColdStart) {
    if (cold_start_attempts < 1) throw ValidationError("cold_start.attempts_per_problem must be >= 1");
    if (cold_start_target < 0) throw ValidationError("cold_start.target_count must be >= 0");
  }
  if ((mode == DataMode::StandardKD || mode == DataMode::SelfDistill) && baseline_samples < 1) {
    throw ValidationError("baseline.samples_per_problem must be >= 1");
  }
  if (mode == DataMode::PoolSelect && pools_path.empty()) throw ValidationError("pool_select mode needs paths.pools");
}

std::string RunConfig::run_id() const {
  auto j = to_json();
  j.erase("workers");
  return std::string(to_string(mode)) + "-" + hex(stable_hash(j.dump()));
}

std::unique_ptr<ModelBackend> make_backend(const BackendConfig& config) {
  if (config.kind == BackendConfig::Kind::Toy) {
    auto spec = ToyModelSpec::load(config.toy_spec);
    return std::make_unique<ToyBackend>(std::move(spec), config.toy_caps.value_or(Capabilities{true, true, true}));
  }
  return std::make_unique<RemoteBackend>(config.remote, config.toy_caps);
}

namespace {

std::set<std::string> held_out_ids(const fs::path& run_dir) {
  auto manifest = RunStore::load_manifest(run_dir);
  std::set<std::string> ids;
  for (const auto& p : manifest.problems) {
    if (p.status != ProblemStatus::Pending) ids.insert(p.problem_id);
  }
  return ids;
}

}  // namespace

RunOutcome execute_run(const RunConfig& config, const RunControl& control) {
  config.validate();
  const auto snapshot = config.to_json();

  auto problems = read_problems(config.problems_path);
  std::map<std::string, std::vector<std::string>> pools;
  if (config.mode == DataMode::PoolSelect) pools = read_pools(config.pools_path);

  PipelineOptions options;
  options.workers = config.workers;
  options.seed = config.seed;
  options.prompt_prefix = config.prompt_prefix;
  if (!config.exclude_run.empty()) {
    options.exclude_ids = held_out_ids(config.exclude_run);
    std::vector<std::string> remaining;
    for (const auto& p : problems) {
      if (!options.exclude_ids.count(p.problem_id)) remaining.push_back(p.problem_id);
    }
    check_disjoint(remaining, options.exclude_ids);
  }

  RunStore store;
  if (control.resume) {
    store = RunStore::open(config.output_dir);
    auto diff = config_diff(store.manifest().config, snapshot, {"workers"});
    if (!diff.empty()) throw ResumeMismatchError("config differs from the run being resumed", diff);
  } else {
    RunManifest manifest;
    manifest.run_id = config.run_id();
    manifest.version = CHUNKSEL_VERSION;
    manifest.mode = config.mode;
    manifest.config = snapshot;
    store = RunStore::create(config.output_dir, std::move(manifest));
  }

  // Backends start after the store exists so a startup failure leaves a
  // resumable (all pending) run behind.
  std::unique_ptr<ModelBackend> teacher, student;
  if (config.teacher && config.mode != DataMode::SelfDistill && config.mode != DataMode::PoolSelect) {
    teacher = make_backend(*config.teacher);
  }
  if (config.student && config.mode != DataMode::ColdStart && config.mode != DataMode::StandardKD) {
    student = make_backend(*config.student);
  }

  options.cancel = control.cancel;
  options.store = &store;
  options.on_problem_done = control.on_problem_done;

  RunOutcome outcome;
  outcome.run_dir = config.output_dir;
  switch (config.mode) {
    case DataMode::ColdStart:
      outcome.result = build_cold_start(problems, *teacher, config.generation, config.cold_start_attempts,
                                        config.cold_start_target, options);
      break;
    case DataMode::SSD:
      outcome.result = build_ssd_dataset(problems, *teacher, *student, config.generation, config.schedule,
                                         config.strategy, config.beam_width, options);
      break;
    case DataMode::StandardKD:
      outcome.result = build_standard_kd(problems, *teacher, config.generation, config.baseline_samples, options);
      break;
    case DataMode::SelfDistill:
      outcome.result = build_self_distill(problems, *student, config.generation, config.baseline_samples, options);
      break;
    case DataMode::PoolSelect:
      outcome.result =
          build_pool_select(problems, pools, *student, config.strategy, config.pool_chunk_size, options);
      break;
  }
  return outcome;
}

}  // namespace chunksel
