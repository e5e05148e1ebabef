#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "chunksel/answer.hpp"
#include "chunksel/backend.hpp"
#include "chunksel/dataset.hpp"
#include "chunksel/selection.hpp"

namespace chunksel {

enum class ProblemStatus { Pending, Done, Failed };
enum class Outcome { None, Kept, Filtered, Failed, Unverifiable };

const char* to_string(ProblemStatus status);
const char* to_string(Outcome outcome);

struct ProblemEntry {
  std::string problem_id;
  ProblemStatus status = ProblemStatus::Pending;
  Outcome outcome = Outcome::None;
  std::string error;
  int steps = 0;                    // chunk steps (SSD) or samples drawn (single-shot modes)
  std::int64_t candidates = 0;      // teacher samples requested
  std::int64_t tokens_sampled = 0;  // teacher tokens over all candidates
  std::int64_t tokens_selected = 0; // teacher tokens in the final trajectory
  std::vector<int> per_step_candidates;
};

struct RunCounters {
  std::int64_t total = 0;
  std::int64_t pending = 0;
  std::int64_t kept = 0;
  std::int64_t filtered = 0;  // includes unverifiable
  std::int64_t failed = 0;
  std::int64_t unverifiable = 0;
  std::int64_t candidates = 0;
  std::int64_t tokens_sampled = 0;
  std::int64_t tokens_selected = 0;

  std::int64_t attempted() const { return kept + filtered + failed; }
};

struct RunManifest {
  std::string run_id;
  std::string version;
  DataMode mode = DataMode::SSD;
  nlohmann::json config = nlohmann::json::object();
  std::vector<ProblemEntry> problems;  // sorted by problem_id
  std::vector<std::string> warnings;

  RunCounters counters() const;
  bool complete() const;  // nothing pending
  ProblemEntry* find(const std::string& problem_id);
  const ProblemEntry* find(const std::string& problem_id) const;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// Run directory: config.json, manifest.json, journal.jsonl, dataset.jsonl,
/// sft.jsonl and VERSION. The journal holds one line per kept record; the
/// manifest is rewritten atomically after every problem. A default-constructed
/// store keeps everything in memory.
class RunStore {
 public:
  RunStore() = default;

  static RunStore create(const std::filesystem::path& dir, RunManifest manifest);
  static RunStore open(const std::filesystem::path& dir);
  static RunStore memory(RunManifest manifest);
  static RunManifest load_manifest(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const { return dir_; }
  bool in_memory() const { return dir_.empty(); }

  RunManifest manifest() const;
  std::vector<DatasetRecord> kept_records() const;
  ProblemStatus status_of(const std::string& problem_id) const;

  // Populates a fresh store with pending entries, or checks that a resumed one
  // covers exactly these ids and this mode (ResumeMismatchError otherwise).
  void bind_problems(const std::vector<std::string>& sorted_ids, DataMode mode);

  // Thread-safe; one call per finished problem.
  void record(const ProblemEntry& entry, const std::optional<DatasetRecord>& kept);
  void reset_to_pending(const std::vector<std::string>& problem_ids);
  void add_warning(const std::string& warning);

  // dataset.jsonl + sft.jsonl from the kept records.
  void finalize();

  static constexpr const char* kConfigFile = "config.json";
  static constexpr const char* kManifestFile = "manifest.json";
  static constexpr const char* kJournalFile = "journal.jsonl";
  static constexpr const char* kDatasetFile = "dataset.jsonl";
  static constexpr const char* kSftFile = "sft.jsonl";
  static constexpr const char* kVersionFile = "VERSION";

 private:
  void flush_manifest_locked();
  void rewrite_journal_locked();

  std::filesystem::path dir_;
  mutable std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
  RunManifest manifest_;
  std::map<std::string, DatasetRecord> kept_;
};

struct PipelineOptions {
  int workers = 1;
  std::uint64_t seed = 0;
  std::string prompt_prefix;
  const std::atomic<bool>* cancel = nullptr;            // drain: finish in-flight problems, start no more
  std::function<void(const ProblemEntry&)> on_problem_done;  // calls are serialized
  StepObserver step_observer;                           // SSD only; called concurrently from workers
  std::set<std::string> exclude_ids;                    // e.g. cold-start problems
  RunStore* store = nullptr;                            // in-memory when null
};

struct BuildResult {
  std::vector<DatasetRecord> records;  // kept records, sorted by problem_id
  RunManifest manifest;
  bool interrupted = false;
};

// Throws ValidationError naming the shared ids.
void check_disjoint(const std::vector<std::string>& a, const std::set<std::string>& b);

BuildResult build_cold_start(const std::vector<Problem>& problems, ModelBackend& teacher,
                             const GenerationParams& params, int attempts_per_problem, int target_count,
                             const PipelineOptions& options = {});

BuildResult build_ssd_dataset(const std::vector<Problem>& problems, ModelBackend& teacher, ModelBackend& student,
                              const GenerationParams& params, const SamplingSchedule& schedule,
                              const SelectionStrategy& strategy, int beam_width,
                              const PipelineOptions& options = {});

BuildResult build_standard_kd(const std::vector<Problem>& problems, ModelBackend& teacher,
                              const GenerationParams& params, int samples_per_problem,
                              const PipelineOptions& options = {});

BuildResult build_self_distill(const std::vector<Problem>& problems, ModelBackend& student,
                               const GenerationParams& params, int samples_per_problem,
                               const PipelineOptions& options = {});

// Pools are keyed by problem_id; problems without a (nonempty) pool fail.
// nominal_chunk_size is stamped on records (full solutions = one chunk).
BuildResult build_pool_select(const std::vector<Problem>& problems,
                              const std::map<std::string, std::vector<std::string>>& pools,
                              ModelBackend& student, const SelectionStrategy& strategy, int nominal_chunk_size,
                              const PipelineOptions& options = {});

/// Scores each pooled solution under the student and wraps the strategy's pick
/// (correctness included) as a PoolSelect record.
DatasetRecord select_from_pool(const Problem& problem, const std::vector<std::string>& pool, ModelBackend& student,
                               const SelectionStrategy& strategy, std::string_view prompt_prefix = {},
                               int nominal_chunk_size = 0, std::uint64_t seed = 0);

// Lines "key: old -> new" for every differing leaf; `ignore` lists top-level keys.
std::vector<std::string> config_diff(const nlohmann::json& before, const nlohmann::json& after,
                                     const std::set<std::string>& ignore = {});

}  // namespace chunksel
