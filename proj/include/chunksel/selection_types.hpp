#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chunksel {

/// Perplexity from a summed negative log-likelihood (nats) over token_count
/// student tokens: exp(sum_nll / token_count). Throws ValidationError when
/// token_count < 1 or sum_nll is not finite.
double compute_ppl(double sum_nll, std::int64_t token_count);

struct TokenScore {
  std::string token_text;
  double logprob = 0.0;  // natural log
};

// Largest logprob accepted before a score is treated as corrupt.
inline constexpr double kLogprobSlack = 1e-6;

// One sampled continuation with its student scores.
struct ScoredChunk {
  std::string text;
  std::vector<TokenScore> token_scores;
  double sum_nll = 0.0;
  std::int64_t token_count = 0;
  double ppl = 1.0;
  bool finished = false;
  int teacher_token_count = 0;
};

// Builds a chunk and derives sum_nll/token_count/ppl from the scores.
// Throws ValidationError on empty scores or non-finite/positive logprobs.
ScoredChunk make_scored_chunk(std::string text, std::vector<TokenScore> scores, bool finished,
                              int teacher_token_count);

struct CandidateTrajectory {
  std::string problem_id;
  std::vector<ScoredChunk> chunks;
  double cum_sum_nll = 0.0;
  std::int64_t cum_token_count = 0;
  std::int64_t cum_teacher_token_count = 0;
  bool finished = false;
  int chunk_index = 0;

  // Throws when no student token has been scored yet.
  double ppl() const;
  std::string text() const;

  // Copy with `chunk` appended. NLL accumulates token by token so that a flat
  // re-summation over all chunk tokens gives the identical value.
  CandidateTrajectory extended(const ScoredChunk& chunk, int max_generation_tokens) const;
};

/// Candidate counts per chunk step: head[c-1] for c <= head.size(), tail after.
class SamplingSchedule {
 public:
  SamplingSchedule();  // head {16, 8}, tail 4
  SamplingSchedule(std::vector<int> head, int tail);

  static SamplingSchedule fixed(int k) { return SamplingSchedule({}, k); }

  int k_at(int step) const;
  // Total candidates over steps 1..steps.
  std::int64_t total_for(int steps) const;

  const std::vector<int>& head() const { return head_; }
  int tail() const { return tail_; }

  // "head=16,8;tail=4"
  std::string descriptor() const;
  static SamplingSchedule parse(std::string_view descriptor);

  friend bool operator==(const SamplingSchedule&, const SamplingSchedule&) = default;

 private:
  std::vector<int> head_;
  int tail_;
};

enum class StrategyKind { LowPPL, HighPPL, RandomPPL };

const char* to_string(StrategyKind kind);
StrategyKind parse_strategy_kind(std::string_view text);

struct SelectionStrategy {
  StrategyKind kind = StrategyKind::LowPPL;
  std::uint64_t rng_seed = 0;

  // Per-decision strategy for RandomPPL: the seed is mixed with the problem and
  // the step so successive decisions draw from distinct streams.
  SelectionStrategy derived(std::string_view problem_id, int step) const;
};

struct GenerationParams {
  double temperature = 0.6;
  double top_p = 0.95;
  int top_k = 30;  // 0 disables
  int max_generation_tokens = 16384;
  int chunk_size = 4096;
  std::vector<std::string> stop_markers;

  void validate() const;
  // Number of chunk steps needed to reach max_generation_tokens.
  int max_steps() const;
};

struct Beam {
  std::vector<CandidateTrajectory> entries;
  int beam_width = 2;
};

}  // namespace chunksel
