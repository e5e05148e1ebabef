#include "chunksel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chunksel/errors.hpp"
#include "chunksel/selection.hpp"
#include "parallel.hpp"

namespace chunksel {
namespace {

ScoredChunk rescore(const DatasetRecord& r, ModelBackend& scorer, std::string_view prefix) {
  Problem p;
  p.problem_id = r.problem_id;
  p.prompt = r.prompt;
  auto scores = scorer.score_text(problem_context(p, prefix), r.trajectory_text);
  if (scores.empty()) throw ValidationError("record " + r.problem_id + ": trajectory has no student tokens");
  return make_scored_chunk(r.trajectory_text, std::move(scores), true, 0);
}

std::size_t fan_out(const ModelBackend& backend, std::size_t n) {
  return backend.prefers_concurrency() ? std::min<std::size_t>(n, 64) : 1;
}

std::string schedule_of(const nlohmann::json& config) {
  if (!config.contains("schedule")) return "";
  const auto& s = config["schedule"];
  try {
    return SamplingSchedule(s.at("head").get<std::vector<int>>(), s.at("tail").get<int>()).descriptor();
  } catch (const std::exception&) {
    return s.dump();
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

nlohmann::json DatasetStats::to_json() const {
  nlohmann::json j = {
      {"record_count", record_count},
      {"attempted", attempted},
      {"means_defined", means_defined},
      {"kept_tokens_sampled", kept_tokens_sampled},
      {"keep_rate", keep_rate},
      {"mean_ppl", nullptr},
      {"mean_stored_ppl", nullptr},
      {"stored_ppl_count", stored_ppl_count},
      {"max_ppl_divergence", nullptr},
      {"mean_student_tokens", nullptr},
      {"mean_teacher_tokens", nullptr},
  };
  if (means_defined) {
    j["mean_ppl"] = mean_ppl;
    j["mean_student_tokens"] = mean_student_tokens;
    j["mean_teacher_tokens"] = mean_teacher_tokens;
  }
  if (stored_ppl_count > 0) {
    j["mean_stored_ppl"] = mean_stored_ppl;
    j["max_ppl_divergence"] = max_ppl_divergence;
  }
  return j;
}

DatasetStats dataset_stats(const std::vector<DatasetRecord>& records, ModelBackend& scorer,
                           std::optional<std::int64_t> attempted, std::string_view prompt_prefix) {
  if (!scorer.capabilities().can_score) {
    throw CapabilityError("scorer '" + scorer.identity() + "' cannot score text");
  }
  DatasetStats stats;
  stats.record_count = static_cast<std::int64_t>(records.size());
  stats.attempted = attempted.value_or(stats.record_count);
  if (stats.attempted < stats.record_count) throw ValidationError("attempted count below record count");
  stats.keep_rate = stats.attempted > 0 ? static_cast<double>(stats.record_count) / stats.attempted : 0.0;
  for (const auto& r : records) stats.kept_tokens_sampled += r.teacher_tokens_sampled_total;
  if (records.empty()) return stats;

  auto scored = detail::map_indices(records.size(), fan_out(scorer, records.size()),
                                    [&](std::size_t i) { return rescore(records[i], scorer, prompt_prefix); });

  double ppl_sum = 0.0, stored_sum = 0.0, student_sum = 0.0, teacher_sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& s = scored[i];
    stats.rescored_ppl.push_back(s.ppl);
    stats.rescored_tokens.push_back(s.token_count);
    ppl_sum += s.ppl;
    student_sum += static_cast<double>(s.token_count);
    teacher_sum += static_cast<double>(r.teacher_token_count);
    if (r.trajectory_ppl) {
      ++stats.stored_ppl_count;
      stored_sum += *r.trajectory_ppl;
      stats.max_ppl_divergence = std::max(stats.max_ppl_divergence, std::abs(*r.trajectory_ppl - s.ppl) / s.ppl);
    }
  }
  const double n = static_cast<double>(records.size());
  stats.means_defined = true;
  stats.mean_ppl = ppl_sum / n;
  stats.mean_student_tokens = student_sum / n;
  stats.mean_teacher_tokens = teacher_sum / n;
  if (stats.stored_ppl_count > 0) stats.mean_stored_ppl = stored_sum / static_cast<double>(stats.stored_ppl_count);
  return stats;
}

std::int64_t ChunkTrace::token_count() const {
  std::int64_t n = 0;
  for (auto w : window_tokens) n += w;
  return n;
}

ChunkTrace chunk_trace(const DatasetRecord& record, ModelBackend& scorer, int trace_chunk_size,
                       std::string_view prompt_prefix) {
  if (trace_chunk_size < 1) throw ValidationError("trace chunk size must be >= 1");
  if (!scorer.capabilities().can_score) {
    throw CapabilityError("scorer '" + scorer.identity() + "' cannot score text");
  }
  auto whole = rescore(record, scorer, prompt_prefix);
  ChunkTrace trace;
  trace.problem_id = record.problem_id;
  trace.trace_chunk_size = trace_chunk_size;
  trace.trajectory_ppl = whole.ppl;
  const auto& tokens = whole.token_scores;
  for (std::size_t begin = 0; begin < tokens.size(); begin += trace_chunk_size) {
    const std::size_t end = std::min(tokens.size(), begin + static_cast<std::size_t>(trace_chunk_size));
    double nll = 0.0;
    for (std::size_t i = begin; i < end; ++i) nll += -tokens[i].logprob;
    const auto count = static_cast<std::int64_t>(end - begin);
    trace.window_tokens.push_back(count);
    trace.window_sum_nll.push_back(nll);
    trace.per_chunk_ppl.push_back(compute_ppl(nll, count));
  }
  return trace;
}

nlohmann::json CostReport::to_json() const {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : rows) {
    runs.push_back({{"run_id", r.run_id},
                    {"mode", r.mode},
                    {"schedule", r.schedule},
                    {"problems", r.problems},
                    {"kept", r.kept},
                    {"candidates", r.candidates},
                    {"tokens_sampled", r.tokens_sampled},
                    {"tokens_selected", r.tokens_selected}});
  }
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : ratios) {
    pairs.push_back({{"numerator", p.numerator},
                     {"denominator", p.denominator},
                     {"candidates", p.candidates},
                     {"tokens_sampled", p.tokens_sampled}});
  }
  return {{"runs", runs}, {"ratios", pairs}, {"warnings", warnings}};
}

CostReport cost_report(const std::vector<RunManifest>& manifests) {
  CostReport report;
  for (const auto& m : manifests) {
    if (!m.complete()) {
      report.warnings.push_back("run " + m.run_id + " has pending problems; excluded from the cost report");
      continue;
    }
    const auto c = m.counters();
    CostRow row;
    row.run_id = m.run_id;
    row.mode = to_string(m.mode);
    row.schedule = schedule_of(m.config);
    row.problems = c.total;
    row.kept = c.kept;
    row.candidates = c.candidates;
    row.tokens_sampled = c.tokens_sampled;
    row.tokens_selected = c.tokens_selected;
    report.rows.push_back(std::move(row));
  }
  auto ratio = [](std::int64_t a, std::int64_t b) {
    return b == 0 ? std::nan("") : static_cast<double>(a) / static_cast<double>(b);
  };
  for (const auto& a : report.rows) {
    for (const auto& b : report.rows) {
      if (&a == &b) continue;
      report.ratios.push_back(
          {a.run_id, b.run_id, ratio(a.candidates, b.candidates), ratio(a.tokens_sampled, b.tokens_sampled)});
    }
  }
  return report;
}

std::string stats_tsv(const std::string& run_id, const DatasetStats& s) {
  std::string out =
      "run_id\trecord_count\tattempted\tkeep_rate\tmean_ppl\tmean_stored_ppl\tmax_ppl_divergence\t"
      "mean_student_tokens\tmean_teacher_tokens\tkept_tokens_sampled\n";
  auto opt = [](bool defined, double v) { return defined ? fmt(v) : std::string("NA"); };
  out += run_id + "\t" + std::to_string(s.record_count) + "\t" + std::to_string(s.attempted) + "\t" +
         fmt(s.keep_rate) + "\t" + opt(s.means_defined, s.mean_ppl) + "\t" +
         opt(s.stored_ppl_count > 0, s.mean_stored_ppl) + "\t" + opt(s.stored_ppl_count > 0, s.max_ppl_divergence) +
         "\t" + opt(s.means_defined, s.mean_student_tokens) + "\t" + opt(s.means_defined, s.mean_teacher_tokens) +
         "\t" + std::to_string(s.kept_tokens_sampled) + "\n";
  return out;
}

std::string trace_tsv(const std::string& run_id, const std::vector<ChunkTrace>& traces) {
  std::string out = "run_id\tproblem_id\twindow\tstart_token\ttokens\tsum_nll\tppl\n";
  for (const auto& t : traces) {
    std::int64_t start = 0;
    for (std::size_t w = 0; w < t.per_chunk_ppl.size(); ++w) {
      out += run_id + "\t" + t.problem_id + "\t" + std::to_string(w) + "\t" + std::to_string(start) + "\t" +
             std::to_string(t.window_tokens[w]) + "\t" + fmt(t.window_sum_nll[w]) + "\t" + fmt(t.per_chunk_ppl[w]) +
             "\n";
      start += t.window_tokens[w];
    }
  }
  return out;
}

std::string cost_tsv(const CostReport& report) {
  std::string out = "run_id\tmode\tschedule\tproblems\tkept\tcandidates\ttokens_sampled\ttokens_selected\n";
  for (const auto& r : report.rows) {
    out += r.run_id + "\t" + r.mode + "\t" + r.schedule + "\t" + std::to_string(r.problems) + "\t" +
           std::to_string(r.kept) + "\t" + std::to_string(r.candidates) + "\t" + std::to_string(r.tokens_sampled) +
           "\t" + std::to_string(r.tokens_selected) + "\n";
  }
  return out;
}

std::string ratio_tsv(const CostReport& report) {
  std::string out = "numerator\tdenominator\tcandidates_ratio\ttokens_sampled_ratio\n";
  for (const auto& p : report.ratios) {
    out += p.numerator + "\t" + p.denominator + "\t" + fmt(p.candidates) + "\t" + fmt(p.tokens_sampled) + "\n";
  }
  return out;
}

}  // namespace chunksel
