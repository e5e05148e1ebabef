#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chunksel/answer.hpp"
#include "chunksel/backend.hpp"
#include "chunksel/selection_types.hpp"

namespace chunksel {

/// Index chosen from candidate PPLs. LowPPL takes the minimum, HighPPL the
/// maximum, RandomPPL draws SeededStream(rng_seed).uniform_index(n). Ties go to
/// the lowest index. Throws ValidationError on an empty list.
std::size_t select_index(std::span<const double> ppls, const SelectionStrategy& strategy);
std::size_t select_candidate(std::span<const ScoredChunk> candidates, const SelectionStrategy& strategy);

/// Splits k candidates across the live (unfinished) beam entries as evenly as
/// possible, remainder to the first live entry (lowest PPL, the beam being
/// sorted). Finished entries get 0.
std::vector<int> allocate_candidates(const Beam& beam, int k);

/// One beam advancement. per_entry_candidates is aligned with beam.entries;
/// every live entry needs at least one candidate, finished entries are carried
/// over as they are. The pool {entry + candidate} plus finished entries is
/// ranked by trajectory PPL (ties: fewer student tokens, then pool order) and
/// the beam_width best under the strategy survive; RandomPPL samples survivors
/// without replacement. The result is sorted ascending by PPL.
Beam advance_beam(const Beam& beam, const std::vector<std::vector<ScoredChunk>>& per_entry_candidates,
                  const SelectionStrategy& strategy, int max_generation_tokens);

// Index of the entry a strategy would keep if the run stopped now.
std::size_t best_entry_index(const Beam& beam, const SelectionStrategy& strategy);

// Teacher/student context for a problem: prompt_prefix + prompt.
std::string problem_context(const Problem& problem, std::string_view prompt_prefix);

struct StepRecord {
  std::string problem_id;
  int step = 0;
  int k = 0;
  std::vector<CandidateTrajectory> beam_before;
  std::vector<int> allocation;                        // aligned with beam_before
  std::vector<std::vector<ScoredChunk>> candidates;   // aligned with beam_before, empties removed
  int discarded_empty = 0;
  Beam beam_after;
};

using StepObserver = std::function<void(const StepRecord&)>;

struct SelectionOptions {
  std::string prompt_prefix;
  std::uint64_t run_seed = 0;
  StepObserver observer;
};

struct SelectionResult {
  CandidateTrajectory best;
  Beam final_beam;
  int steps = 0;
  std::int64_t candidates_consumed = 0;
  std::int64_t teacher_tokens_sampled = 0;
  std::vector<int> per_step_candidates;
};

/// Chunked generation with student-side selection.
///
/// For c = 1..ceil(max_generation_tokens / chunk_size): K_c teacher samples are
/// split over the live beam entries, each continuation is scored by the
/// student conditioned on the problem and the entry's selected prefix, and the
/// beam advances. The loop ends early once the entry the strategy would return
/// is finished. Throws CapabilityError, BackendError, or StepError (no
/// scorable candidate at a step).
SelectionResult run_self_selection(const Problem& problem, ModelBackend& teacher, ModelBackend& student,
                                   const GenerationParams& params, const SamplingSchedule& schedule,
                                   const SelectionStrategy& strategy, int beam_width,
                                   const SelectionOptions& options = {});

struct PoolPick {
  std::size_t index = 0;  // into the original pool
  ScoredChunk scored;
  std::vector<double> ppls;  // per pool entry; NaN where the solution was unscorable
};

// Scores each full solution under the student (conditioned on the problem) and
// applies the strategy. Empty solutions are skipped; throws on an empty pool.
PoolPick pick_from_pool(const Problem& problem, std::span<const std::string> pool, ModelBackend& student,
                        const SelectionStrategy& strategy, std::string_view prompt_prefix = {});

}  // namespace chunksel
