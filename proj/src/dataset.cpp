#include "chunksel/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "chunksel/errors.hpp"

namespace chunksel {
namespace {

std::string as_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      fn(j);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

const char* to_string(DataMode mode) {
  switch (mode) {
    case DataMode::ColdStart: return "cold_start";
    case DataMode::SSD: return "ssd";
    case DataMode::StandardKD: return "standard_kd";
    case DataMode::SelfDistill: return "self_distill";
    case DataMode::PoolSelect: return "pool_select";
  }
  return "ssd";
}

DataMode parse_data_mode(std::string_view text) {
  for (auto m : {DataMode::ColdStart, DataMode::SSD, DataMode::StandardKD, DataMode::SelfDistill,
                 DataMode::PoolSelect}) {
    if (text == to_string(m)) return m;
  }
  throw ValidationError("unknown mode '" + std::string(text) + "'");
}

nlohmann::json to_json(const DatasetRecord& r) {
  nlohmann::json j = {
      {"problem_id", r.problem_id},
      {"prompt", r.prompt},
      {"trajectory_text", r.trajectory_text},
      {"extracted_answer", r.extracted_answer},
      {"correct", r.correct},
      {"trajectory_ppl", nullptr},
      {"student_token_count", r.student_token_count},
      {"teacher_token_count", r.teacher_token_count},
      {"teacher_tokens_sampled_total", r.teacher_tokens_sampled_total},
      {"mode", to_string(r.mode)},
      {"strategy", to_string(r.strategy)},
      {"chunk_size", r.chunk_size},
      {"schedule_descriptor", r.schedule_descriptor},
      {"seed", r.seed},
  };
  if (r.trajectory_ppl) j["trajectory_ppl"] = *r.trajectory_ppl;
  return j;
}

DatasetRecord record_from_json(const nlohmann::json& j) {
  DatasetRecord r;
  r.problem_id = j.at("problem_id").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  r.trajectory_text = j.at("trajectory_text").get<std::string>();
  r.extracted_answer = j.at("extracted_answer").get<std::string>();
  r.correct = j.at("correct").get<bool>();
  if (!j.at("trajectory_ppl").is_null()) r.trajectory_ppl = j.at("trajectory_ppl").get<double>();
  r.student_token_count = j.at("student_token_count").get<std::int64_t>();
  r.teacher_token_count = j.at("teacher_token_count").get<std::int64_t>();
  r.teacher_tokens_sampled_total = j.at("teacher_tokens_sampled_total").get<std::int64_t>();
  r.mode = parse_data_mode(j.at("mode").get<std::string>());
  r.strategy = parse_strategy_kind(j.at("strategy").get<std::string>());
  r.chunk_size = j.at("chunk_size").get<int>();
  r.schedule_descriptor = j.at("schedule_descriptor").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void sort_by_id(std::vector<DatasetRecord>& records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const DatasetRecord& a, const DatasetRecord& b) { return a.problem_id < b.problem_id; });
}

}  // namespace

void write_dataset(const std::filesystem::path& path, std::vector<DatasetRecord> records) {
  sort_by_id(records);
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  write_file_atomic(path, out);
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
  std::vector<DatasetRecord> out;
  for_each_line(path, [&](const nlohmann::json& j) { out.push_back(record_from_json(j)); });
  return out;
}

std::string sft_completion(std::string_view text) {
  std::string out;
  if (text.find(kThinkClose) != std::string_view::npos) {
    if (text.substr(0, kThinkOpen.size()) != kThinkOpen) {
      out += kThinkOpen;
      out += "\n";
    }
    out += text;
    return out;
  }
  out += kThinkOpen;
  out += "\n";
  out += text;
  out += "\n";
  out += kThinkClose;
  return out;
}

void write_sft(const std::filesystem::path& path, std::vector<DatasetRecord> records) {
  sort_by_id(records);
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j = {{"prompt", r.prompt}, {"completion", sft_completion(r.trajectory_text)}};
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<Problem> read_problems(const std::filesystem::path& path) {
  std::vector<Problem> out;
  std::set<std::string> ids;
  for_each_line(path, [&](const nlohmann::json& j) {
    Problem p;
    p.problem_id = as_string(j.at("problem_id"));
    p.prompt = j.at("prompt").get<std::string>();
    if (j.contains("gold_answer") && !j["gold_answer"].is_null()) p.gold_answer = as_string(j["gold_answer"]);
    for (const auto& [key, value] : j.items()) {
      if (key == "problem_id" || key == "prompt" || key == "gold_answer") continue;
      if (key == "metadata" && value.is_object()) {
        for (const auto& [mk, mv] : value.items()) p.metadata[mk] = as_string(mv);
      } else {
        p.metadata[key] = as_string(value);
      }
    }
    if (p.problem_id.empty()) throw ValidationError("empty problem_id");
    if (!ids.insert(p.problem_id).second) throw ValidationError("duplicate problem_id '" + p.problem_id + "'");
    if (p.gold_answer.empty() && !p.unverifiable()) {
      throw ValidationError("problem '" + p.problem_id + "' has no gold_answer (set metadata.unverifiable)");
    }
    out.push_back(std::move(p));
  });
  return out;
}

void write_problems(const std::filesystem::path& path, const std::vector<Problem>& problems) {
  std::string out;
  for (const auto& p : problems) {
    nlohmann::json j = {{"problem_id", p.problem_id}, {"prompt", p.prompt}, {"gold_answer", p.gold_answer}};
    if (!p.metadata.empty()) j["metadata"] = p.metadata;
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::map<std::string, std::vector<std::string>> read_pools(const std::filesystem::path& path) {
  std::map<std::string, std::vector<std::string>> out;
  for_each_line(path, [&](const nlohmann::json& j) {
    std::string id = as_string(j.at("problem_id"));
    if (out.count(id)) throw ValidationError("duplicate pool for problem '" + id + "'");
    out[id] = j.at("solutions").get<std::vector<std::string>>();
  });
  return out;
}

}  // namespace chunksel
