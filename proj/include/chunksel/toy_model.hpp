#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chunksel/backend.hpp"

namespace chunksel {

/// Fixed-order n-gram model with explicit weight tables.
///
/// Text format (one directive per line, '#' starts a comment):
///
///   name  = toy-teacher
///   order = 2
///   seed  = 17
///   vocab = a b \s $
///   end   = $
///   row   : 4 2 1 1        # empty context (required)
///   row a : 1 3 1 0.5      # context "a"
///
/// Vocabulary symbols are whitespace-separated; inside a symbol `\s` is a
/// space, `\n` a newline, `\t` a tab and `\\` a backslash. Each row lists one
/// nonnegative weight per vocabulary symbol (in vocab order, positive sum)
/// for a context of up to order-1 symbols. No symbol may be a prefix of
/// another, which keeps tokenization unique. Lookups back off from the longest
/// matching context suffix down to the empty row.
struct ToyModelSpec {
  std::string name = "toy";
  int order = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> vocabulary;
  std::string end_symbol;
  std::map<std::vector<std::string>, std::vector<double>> transition_weights;

  static ToyModelSpec parse(std::string_view text);
  static ToyModelSpec load(const std::filesystem::path& path);
  std::string serialize() const;
  void validate() const;
};

class ToyBackend : public ModelBackend {
 public:
  explicit ToyBackend(ToyModelSpec spec, Capabilities caps = {true, true, true});

  std::string identity() const override;
  Capabilities capabilities() const override { return caps_; }

  // Samples from the exact normalized table; temperature/top_p/top_k are not
  // applied, keeping sampling and scoring probabilities identical.
  std::vector<SampledText> sample_continuations(const SampleRequest& request) override;
  std::vector<TokenScore> score_text(std::string_view context, std::string_view continuation) override;

  const ToyModelSpec& spec() const { return spec_; }

  // Greedy longest-match tokenization; unknown bytes become -1 when lenient,
  // otherwise throw ValidationError.
  std::vector<int> tokenize(std::string_view text, bool lenient) const;

  // Normalized next-symbol distribution after `history` (symbol ids).
  const std::vector<double>& distribution(std::span<const int> history) const;

  // Single sampled continuation along with the probability used at each step.
  struct Trace {
    SampledText sample;
    std::vector<double> step_probabilities;
  };
  Trace sample_one(std::string_view context, std::uint64_t stream_seed, int token_budget,
                   const std::vector<std::string>& stop_markers) const;

  std::uint64_t stream_seed(const SampleRequest& request, int candidate) const;

  std::int64_t sample_calls() const { return sample_calls_.load(); }
  std::int64_t score_calls() const { return score_calls_.load(); }

 private:
  std::vector<int> history_of(std::string_view context) const;

  ToyModelSpec spec_;
  Capabilities caps_;
  int end_id_ = -1;
  std::size_t max_symbol_len_ = 0;
  std::map<std::vector<int>, std::vector<double>> probs_;
  std::atomic<std::int64_t> sample_calls_{0};
  std::atomic<std::int64_t> score_calls_{0};
};

}  // namespace chunksel
