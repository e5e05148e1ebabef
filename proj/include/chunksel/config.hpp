#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "chunksel/backend.hpp"
#include "chunksel/dataset.hpp"
#include "chunksel/pipeline.hpp"
#include "chunksel/remote_backend.hpp"
#include "chunksel/selection_types.hpp"

namespace chunksel {

struct BackendConfig {
  enum class Kind { Toy, Remote };
  Kind kind = Kind::Toy;
  std::filesystem::path toy_spec;         // absolute after loading
  std::optional<Capabilities> toy_caps;   // narrows what a toy backend advertises
  RemoteEndpointConfig remote;
  bool cold_started = false;              // meaningful for the student only
};

/// Everything a run needs. The JSON form written into the run directory is
/// the resolved snapshot (absolute paths, every default spelled out).
struct RunConfig {
  DataMode mode = DataMode::SSD;
  std::optional<BackendConfig> teacher;
  std::optional<BackendConfig> student;
  GenerationParams generation;
  SamplingSchedule schedule;
  SelectionStrategy strategy;
  int beam_width = 2;
  int workers = 1;
  std::uint64_t seed = 0;
  std::string prompt_prefix;
  int cold_start_attempts = 4;
  int cold_start_target = 3000;
  int baseline_samples = 1;
  int pool_chunk_size = 16384;  // stamped on pool-select records

  std::filesystem::path problems_path;
  std::filesystem::path pools_path;
  std::filesystem::path output_dir;
  std::filesystem::path exclude_run;  // cold-start run whose problems are held out

  // Relative paths resolve against base_dir.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  nlohmann::json to_json() const;
  void validate() const;

  // Stable over everything except the worker count.
  std::string run_id() const;
};

// Backends are built from config; remote endpoints read their token from the
// named environment variable and probe capabilities (StartupError on failure).
std::unique_ptr<ModelBackend> make_backend(const BackendConfig& config);

struct RunControl {
  bool resume = false;
  const std::atomic<bool>* cancel = nullptr;
  std::function<void(const ProblemEntry&)> on_problem_done;
};

struct RunOutcome {
  BuildResult result;
  std::filesystem::path run_dir;
};

// Creates (or with resume, reopens and checks) the run directory named by
// output_dir and drives the configured mode to completion or drain.
RunOutcome execute_run(const RunConfig& config, const RunControl& control = {});

}  // namespace chunksel
