#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "chunksel/selection_types.hpp"

namespace chunksel {

struct Capabilities {
  bool can_sample = false;
  bool can_score = false;
  // Endpoint honours n > 1 in one request; otherwise sampling fans out.
  bool supports_n = true;
};

// Identifies one batch of samples. Deterministic backends derive candidate
// RNG streams from (run_seed, problem_id, step, first_candidate_index + i), so
// the same request always yields the same continuations regardless of
// scheduling.
struct SampleRequest {
  std::string problem_id;
  int step = 0;                 // chunk step c (1-based); 0 for single-shot modes
  int first_candidate_index = 0;
  std::uint64_t run_seed = 0;
  std::string context;
  int n = 1;
  int token_budget = 1;
  GenerationParams params;
};

struct SampledText {
  std::string text;
  int teacher_token_count = 0;
  bool finished = false;
};

/// Teacher or student model. Implementations must be safe to call from
/// several threads at once.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual std::string identity() const = 0;
  virtual Capabilities capabilities() const = 0;

  // Exactly request.n results, each within token_budget backend tokens, or
  // throws. Never returns a short list.
  virtual std::vector<SampledText> sample_continuations(const SampleRequest& request) = 0;

  // One score per backend token of `continuation`, in order; token texts
  // concatenate back to `continuation`. Throws on empty continuation.
  virtual std::vector<TokenScore> score_text(std::string_view context, std::string_view continuation) = 0;

  // Whether callers should overlap calls (network-bound backends).
  virtual bool prefers_concurrency() const { return false; }
};

}  // namespace chunksel
