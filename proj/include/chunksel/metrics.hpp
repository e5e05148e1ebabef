#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chunksel/backend.hpp"
#include "chunksel/dataset.hpp"
#include "chunksel/pipeline.hpp"

namespace chunksel {

struct DatasetStats {
  std::int64_t record_count = 0;
  std::int64_t attempted = 0;
  bool means_defined = false;  // false for an empty dataset
  double mean_ppl = 0.0;       // from a fresh scoring pass
  double mean_stored_ppl = 0.0;
  std::int64_t stored_ppl_count = 0;       // records that carried a stored PPL
  double max_ppl_divergence = 0.0;         // max |stored - rescored| / rescored
  double mean_student_tokens = 0.0;        // rescored student token counts
  double mean_teacher_tokens = 0.0;
  std::int64_t kept_tokens_sampled = 0;    // teacher tokens spent on the kept records only
  double keep_rate = 0.0;                  // record_count / attempted; 0 when nothing was attempted
  std::vector<double> rescored_ppl;        // per record, input order
  std::vector<std::int64_t> rescored_tokens;

  nlohmann::json to_json() const;
};

// Rescoring conditions each trajectory on prompt_prefix + prompt, matching
// generation. `attempted` defaults to the record count.
DatasetStats dataset_stats(const std::vector<DatasetRecord>& records, ModelBackend& scorer,
                           std::optional<std::int64_t> attempted = std::nullopt,
                           std::string_view prompt_prefix = {});

struct ChunkTrace {
  std::string problem_id;
  int trace_chunk_size = 256;
  std::vector<double> per_chunk_ppl;
  std::vector<std::int64_t> window_tokens;
  std::vector<double> window_sum_nll;
  double trajectory_ppl = 1.0;  // of the whole trajectory, same scoring pass

  std::int64_t token_count() const;
};

// One scoring pass over the trajectory, split into consecutive windows of
// trace_chunk_size student tokens; each window's PPL is conditional on all
// preceding text. A trajectory shorter than one window yields one window.
ChunkTrace chunk_trace(const DatasetRecord& record, ModelBackend& scorer, int trace_chunk_size = 256,
                       std::string_view prompt_prefix = {});

struct CostRow {
  std::string run_id;
  std::string mode;
  std::string schedule;
  std::int64_t problems = 0;
  std::int64_t kept = 0;
  std::int64_t candidates = 0;
  std::int64_t tokens_sampled = 0;
  std::int64_t tokens_selected = 0;
};

struct CostRatio {
  std::string numerator;    // run_id
  std::string denominator;  // run_id
  double candidates = 0.0;
  double tokens_sampled = 0.0;
};

struct CostReport {
  std::vector<CostRow> rows;
  std::vector<CostRatio> ratios;  // every ordered pair of included runs
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

// Incomplete manifests (pending problems) are left out with a warning.
CostReport cost_report(const std::vector<RunManifest>& manifests);

// Tab-separated tables with a header row.
std::string stats_tsv(const std::string& run_id, const DatasetStats& stats);
std::string trace_tsv(const std::string& run_id, const std::vector<ChunkTrace>& traces);
std::string cost_tsv(const CostReport& report);
std::string ratio_tsv(const CostReport& report);

}  // namespace chunksel
