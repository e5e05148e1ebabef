#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chunksel/answer.hpp"
#include "chunksel/selection_types.hpp"

namespace chunksel {

enum class DataMode { ColdStart, SSD, StandardKD, SelfDistill, PoolSelect };

const char* to_string(DataMode mode);
DataMode parse_data_mode(std::string_view text);

struct DatasetRecord {
  std::string problem_id;
  std::string prompt;
  std::string trajectory_text;
  std::string extracted_answer;
  bool correct = false;
  std::optional<double> trajectory_ppl;  // student PPL; absent when the mode never scores
  std::int64_t student_token_count = 0;
  std::int64_t teacher_token_count = 0;
  std::int64_t teacher_tokens_sampled_total = 0;
  DataMode mode = DataMode::SSD;
  StrategyKind strategy = StrategyKind::LowPPL;
  int chunk_size = 0;
  std::string schedule_descriptor;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const DatasetRecord& record);
DatasetRecord record_from_json(const nlohmann::json& j);

// Line-delimited output, sorted by problem_id. Written via a temp file + rename.
void write_dataset(const std::filesystem::path& path, std::vector<DatasetRecord> records);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);

// {prompt, completion} pairs; the completion wraps the reasoning in
// <think> ... </think>.
std::string sft_completion(std::string_view trajectory_text);
void write_sft(const std::filesystem::path& path, std::vector<DatasetRecord> records);

// {problem_id, prompt, gold_answer, metadata: {...}, ...}; unknown top-level
// fields are folded into metadata as strings. Rejects duplicate ids and empty
// gold answers on verifiable problems.
std::vector<Problem> read_problems(const std::filesystem::path& path);
void write_problems(const std::filesystem::path& path, const std::vector<Problem>& problems);

// {problem_id, solutions: [...]}
std::map<std::string, std::vector<std::string>> read_pools(const std::filesystem::path& path);

// Writes `content` to `path` atomically (temp file in the same directory, then rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace chunksel
