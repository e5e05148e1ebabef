#include "chunksel/selection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "chunksel/errors.hpp"
#include "chunksel/rng.hpp"
#include "parallel.hpp"

namespace chunksel {

double compute_ppl(double sum_nll, std::int64_t token_count) {
  if (token_count < 1) throw ValidationError("compute_ppl: empty token sequence");
  if (!std::isfinite(sum_nll)) throw ValidationError("compute_ppl: non-finite NLL");
  return std::exp(sum_nll / static_cast<double>(token_count));
}

ScoredChunk make_scored_chunk(std::string text, std::vector<TokenScore> scores, bool finished,
                              int teacher_token_count) {
  if (scores.empty()) throw ValidationError("scored chunk has no student tokens");
  if (teacher_token_count < 0) throw ValidationError("negative teacher token count");
  double nll = 0.0;
  for (const auto& s : scores) {
    if (!std::isfinite(s.logprob)) throw ValidationError("non-finite logprob for token '" + s.token_text + "'");
    if (s.logprob > kLogprobSlack) throw ValidationError("positive logprob for token '" + s.token_text + "'");
    nll += -s.logprob;
  }
  ScoredChunk chunk;
  chunk.text = std::move(text);
  chunk.token_count = static_cast<std::int64_t>(scores.size());
  chunk.token_scores = std::move(scores);
  chunk.sum_nll = nll;
  chunk.ppl = compute_ppl(nll, chunk.token_count);
  chunk.finished = finished;
  chunk.teacher_token_count = teacher_token_count;
  return chunk;
}

double CandidateTrajectory::ppl() const { return compute_ppl(cum_sum_nll, cum_token_count); }

std::string CandidateTrajectory::text() const {
  std::string out;
  for (const auto& c : chunks) out += c.text;
  return out;
}

CandidateTrajectory CandidateTrajectory::extended(const ScoredChunk& chunk, int max_generation_tokens) const {
  CandidateTrajectory next = *this;
  for (const auto& s : chunk.token_scores) next.cum_sum_nll += -s.logprob;
  next.cum_token_count += chunk.token_count;
  next.cum_teacher_token_count += chunk.teacher_token_count;
  next.chunks.push_back(chunk);
  next.chunk_index = static_cast<int>(next.chunks.size());
  next.finished = chunk.finished || next.cum_teacher_token_count >= max_generation_tokens;
  return next;
}

SamplingSchedule::SamplingSchedule() : SamplingSchedule({16, 8}, 4) {}

SamplingSchedule::SamplingSchedule(std::vector<int> head, int tail) : head_(std::move(head)), tail_(tail) {
  if (tail_ < 1) throw ValidationError("schedule tail must be >= 1");
  for (int k : head_) {
    if (k < 1) throw ValidationError("schedule entries must be >= 1");
  }
}

int SamplingSchedule::k_at(int step) const {
  if (step < 1) throw ValidationError("chunk steps are 1-based");
  auto i = static_cast<std::size_t>(step - 1);
  return i < head_.size() ? head_[i] : tail_;
}

std::int64_t SamplingSchedule::total_for(int steps) const {
  std::int64_t total = 0;
  for (int c = 1; c <= steps; ++c) total += k_at(c);
  return total;
}

std::string SamplingSchedule::descriptor() const {
  std::ostringstream os;
  os << "head=";
  for (std::size_t i = 0; i < head_.size(); ++i) os << (i ? "," : "") << head_[i];
  os << ";tail=" << tail_;
  return os.str();
}

SamplingSchedule SamplingSchedule::parse(std::string_view descriptor) {
  auto fail = [&] { return ValidationError("bad schedule descriptor '" + std::string(descriptor) + "'"); };
  auto number = [&](std::string_view t) {
    int v = 0;
    auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || end != t.data() + t.size()) throw fail();
    return v;
  };
  std::vector<int> head;
  std::string_view rest = descriptor;
  if (rest.starts_with("head=")) {
    auto semi = rest.find(';');
    if (semi == std::string_view::npos) throw fail();
    std::string_view list = rest.substr(5, semi - 5);
    while (!list.empty()) {
      auto comma = list.find(',');
      head.push_back(number(list.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      list.remove_prefix(comma + 1);
    }
    rest.remove_prefix(semi + 1);
  }
  if (!rest.starts_with("tail=")) throw fail();
  return SamplingSchedule(std::move(head), number(rest.substr(5)));
}

const char* to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::LowPPL: return "low";
    case StrategyKind::HighPPL: return "high";
    case StrategyKind::RandomPPL: return "random";
  }
  return "low";
}

StrategyKind parse_strategy_kind(std::string_view text) {
  if (text == "low") return StrategyKind::LowPPL;
  if (text == "high") return StrategyKind::HighPPL;
  if (text == "random") return StrategyKind::RandomPPL;
  throw ValidationError("unknown strategy '" + std::string(text) + "' (expected low, high or random)");
}

SelectionStrategy SelectionStrategy::derived(std::string_view problem_id, int step) const {
  if (kind != StrategyKind::RandomPPL) return *this;
  return {kind, mix_seed({rng_seed, stable_hash(problem_id), static_cast<std::uint64_t>(step)})};
}

void GenerationParams::validate() const {
  if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("top_p must be in (0, 1]");
  if (top_k < 0) throw ValidationError("top_k must be >= 0");
  if (max_generation_tokens < 1) throw ValidationError("max_generation_tokens must be >= 1");
  if (chunk_size < 1) throw ValidationError("chunk_size must be >= 1");
  if (chunk_size > max_generation_tokens) {
    throw ValidationError("chunk_size (" + std::to_string(chunk_size) + ") exceeds max_generation_tokens (" +
                          std::to_string(max_generation_tokens) + ")");
  }
}

int GenerationParams::max_steps() const { return (max_generation_tokens + chunk_size - 1) / chunk_size; }

std::size_t select_index(std::span<const double> ppls, const SelectionStrategy& strategy) {
  if (ppls.empty()) throw ValidationError("select_candidate: empty candidate list");
  switch (strategy.kind) {
    case StrategyKind::LowPPL: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < ppls.size(); ++i) {
        if (ppls[i] < ppls[best]) best = i;
      }
      return best;
    }
    case StrategyKind::HighPPL: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < ppls.size(); ++i) {
        if (ppls[i] > ppls[best]) best = i;
      }
      return best;
    }
    case StrategyKind::RandomPPL:
      return SeededStream(strategy.rng_seed).uniform_index(ppls.size());
  }
  return 0;
}

std::size_t select_candidate(std::span<const ScoredChunk> candidates, const SelectionStrategy& strategy) {
  std::vector<double> ppls;
  ppls.reserve(candidates.size());
  for (const auto& c : candidates) ppls.push_back(c.ppl);
  return select_index(ppls, strategy);
}

std::vector<int> allocate_candidates(const Beam& beam, int k) {
  std::vector<int> alloc(beam.entries.size(), 0);
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < beam.entries.size(); ++i) {
    if (!beam.entries[i].finished) live.push_back(i);
  }
  if (live.empty() || k <= 0) return alloc;
  int share = k / static_cast<int>(live.size());
  int rem = k % static_cast<int>(live.size());
  for (std::size_t i : live) alloc[i] = share;
  alloc[live.front()] += rem;
  return alloc;
}

namespace {

struct Ranked {
  double ppl;
  std::int64_t tokens;
  std::size_t order;
};

bool ascending(const Ranked& a, const Ranked& b) {
  if (a.ppl != b.ppl) return a.ppl < b.ppl;
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  return a.order < b.order;
}

bool descending(const Ranked& a, const Ranked& b) {
  if (a.ppl != b.ppl) return a.ppl > b.ppl;
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  return a.order < b.order;
}

std::vector<Ranked> rank_entries(const std::vector<CandidateTrajectory>& entries) {
  std::vector<Ranked> ranked;
  ranked.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ranked.push_back({entries[i].ppl(), entries[i].cum_token_count, i});
  }
  return ranked;
}

// Draws `count` distinct positions from [0, n) by partial Fisher-Yates.
std::vector<std::size_t> seeded_sample(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  SeededStream stream(seed);
  for (std::size_t i = 0; i < count && i < n; ++i) {
    std::size_t j = i + stream.uniform_index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(std::min(count, n));
  return idx;
}

}  // namespace

Beam advance_beam(const Beam& beam, const std::vector<std::vector<ScoredChunk>>& per_entry_candidates,
                  const SelectionStrategy& strategy, int max_generation_tokens) {
  if (beam.beam_width < 1) throw ValidationError("beam_width must be >= 1");
  if (per_entry_candidates.size() != beam.entries.size()) {
    throw ValidationError("advance_beam: candidate lists do not match beam entries");
  }
  bool any_live = std::any_of(beam.entries.begin(), beam.entries.end(),
                              [](const CandidateTrajectory& t) { return !t.finished; });
  if (!any_live) return beam;

  std::vector<CandidateTrajectory> pool;
  for (std::size_t i = 0; i < beam.entries.size(); ++i) {
    const auto& entry = beam.entries[i];
    if (entry.finished) {
      pool.push_back(entry);
      continue;
    }
    if (per_entry_candidates[i].empty()) {
      throw ValidationError("advance_beam: live beam entry " + std::to_string(i) + " has no candidates");
    }
    for (const auto& cand : per_entry_candidates[i]) pool.push_back(entry.extended(cand, max_generation_tokens));
  }

  auto ranked = rank_entries(pool);
  auto width = static_cast<std::size_t>(beam.beam_width);
  std::vector<Ranked> kept;
  switch (strategy.kind) {
    case StrategyKind::LowPPL:
      std::sort(ranked.begin(), ranked.end(), ascending);
      kept.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(width, ranked.size())));
      break;
    case StrategyKind::HighPPL:
      std::sort(ranked.begin(), ranked.end(), descending);
      kept.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(width, ranked.size())));
      break;
    case StrategyKind::RandomPPL:
      for (std::size_t pos : seeded_sample(ranked.size(), width, strategy.rng_seed)) kept.push_back(ranked[pos]);
      break;
  }
  std::sort(kept.begin(), kept.end(), ascending);

  Beam next;
  next.beam_width = beam.beam_width;
  for (const auto& r : kept) next.entries.push_back(std::move(pool[r.order]));
  return next;
}

std::size_t best_entry_index(const Beam& beam, const SelectionStrategy& strategy) {
  if (beam.entries.empty()) throw ValidationError("empty beam");
  auto ranked = rank_entries(beam.entries);
  switch (strategy.kind) {
    case StrategyKind::LowPPL:
      return std::min_element(ranked.begin(), ranked.end(), ascending)->order;
    case StrategyKind::HighPPL:
      return std::min_element(ranked.begin(), ranked.end(), descending)->order;
    case StrategyKind::RandomPPL:
      return SeededStream(strategy.rng_seed).uniform_index(ranked.size());
  }
  return 0;
}

std::string problem_context(const Problem& problem, std::string_view prompt_prefix) {
  std::string ctx(prompt_prefix);
  ctx += problem.prompt;
  return ctx;
}

namespace {

std::size_t fan_out(const ModelBackend& backend, std::size_t n) {
  return backend.prefers_concurrency() ? n : 1;
}

void require_capabilities(const ModelBackend& teacher, const ModelBackend& student) {
  if (!teacher.capabilities().can_sample) {
    throw CapabilityError("teacher backend '" + teacher.identity() + "' cannot sample");
  }
  if (!student.capabilities().can_score) {
    throw CapabilityError("student backend '" + student.identity() + "' cannot score text");
  }
}

}  // namespace

SelectionResult run_self_selection(const Problem& problem, ModelBackend& teacher, ModelBackend& student,
                                   const GenerationParams& params, const SamplingSchedule& schedule,
                                   const SelectionStrategy& strategy, int beam_width,
                                   const SelectionOptions& options) {
  params.validate();
  if (beam_width < 1) throw ValidationError("beam_width must be >= 1");
  require_capabilities(teacher, student);

  const std::string base = problem_context(problem, options.prompt_prefix);
  const SelectionStrategy final_strategy = strategy.derived(problem.problem_id, 0);
  const int max_steps = params.max_steps();

  SelectionResult result;
  Beam beam;
  beam.beam_width = beam_width;
  CandidateTrajectory root;
  root.problem_id = problem.problem_id;
  beam.entries.push_back(root);

  for (int step = 1; step <= max_steps; ++step) {
    const int k = schedule.k_at(step);
    const std::vector<int> alloc = allocate_candidates(beam, k);

    std::vector<SampleRequest> requests(beam.entries.size());
    int offset = 0;
    for (std::size_t i = 0; i < beam.entries.size(); ++i) {
      if (alloc[i] == 0) continue;
      const auto& entry = beam.entries[i];
      auto& req = requests[i];
      req.problem_id = problem.problem_id;
      req.step = step;
      req.first_candidate_index = offset;
      req.run_seed = options.run_seed;
      req.context = base + entry.text();
      req.n = alloc[i];
      req.token_budget = static_cast<int>(
          std::min<std::int64_t>(params.chunk_size, params.max_generation_tokens - entry.cum_teacher_token_count));
      req.params = params;
      offset += alloc[i];
    }

    const std::size_t width = beam.entries.size();
    auto samples = detail::map_indices(width, fan_out(teacher, width), [&](std::size_t i) {
      if (alloc[i] == 0) return std::vector<SampledText>{};
      auto out = teacher.sample_continuations(requests[i]);
      if (static_cast<int>(out.size()) != alloc[i]) {
        throw BackendError("teacher returned " + std::to_string(out.size()) + " candidates, expected " +
                           std::to_string(alloc[i]));
      }
      return out;
    });

    // Flatten for scoring.
    struct Slot {
      std::size_t entry;
      std::size_t cand;
    };
    std::vector<Slot> slots;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      for (std::size_t j = 0; j < samples[i].size(); ++j) {
        result.teacher_tokens_sampled += samples[i][j].teacher_token_count;
        slots.push_back({i, j});
      }
    }
    result.candidates_consumed += offset;
    result.per_step_candidates.push_back(offset);

    auto scores = detail::map_indices(slots.size(), fan_out(student, slots.size()), [&](std::size_t s) {
      const auto& sample = samples[slots[s].entry][slots[s].cand];
      if (sample.text.empty()) return std::vector<TokenScore>{};
      return student.score_text(requests[slots[s].entry].context, sample.text);
    });

    StepRecord record;
    record.problem_id = problem.problem_id;
    record.step = step;
    record.k = k;
    record.allocation = alloc;
    record.candidates.resize(beam.entries.size());
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if (scores[s].empty()) {
        ++record.discarded_empty;
        continue;
      }
      auto& sample = samples[slots[s].entry][slots[s].cand];
      record.candidates[slots[s].entry].push_back(
          make_scored_chunk(std::move(sample.text), std::move(scores[s]), sample.finished, sample.teacher_token_count));
    }

    // Live entries with nothing to extend them drop out of the beam.
    Beam advancing;
    advancing.beam_width = beam_width;
    std::vector<std::vector<ScoredChunk>> advancing_candidates;
    bool any_candidate = false;
    for (std::size_t i = 0; i < beam.entries.size(); ++i) {
      const auto& entry = beam.entries[i];
      if (!entry.finished && record.candidates[i].empty()) continue;
      any_candidate = any_candidate || !record.candidates[i].empty();
      advancing.entries.push_back(entry);
      advancing_candidates.push_back(record.candidates[i]);
    }
    if (!any_candidate) {
      std::ostringstream os;
      os << "problem " << problem.problem_id << ": no scorable candidate at step " << step << " (K=" << k
         << ", requested " << offset << ", empty " << record.discarded_empty << ")";
      throw StepError(os.str());
    }

    record.beam_before = std::move(beam.entries);
    beam = advance_beam(advancing, advancing_candidates, strategy.derived(problem.problem_id, step),
                        params.max_generation_tokens);
    result.steps = step;
    if (options.observer) {
      record.beam_after = beam;
      options.observer(record);
    }

    bool all_finished = std::all_of(beam.entries.begin(), beam.entries.end(),
                                    [](const CandidateTrajectory& t) { return t.finished; });
    if (all_finished || beam.entries[best_entry_index(beam, final_strategy)].finished) break;
  }

  result.best = beam.entries[best_entry_index(beam, final_strategy)];
  result.final_beam = std::move(beam);
  return result;
}

PoolPick pick_from_pool(const Problem& problem, std::span<const std::string> pool, ModelBackend& student,
                        const SelectionStrategy& strategy, std::string_view prompt_prefix) {
  if (pool.empty()) throw ValidationError("problem " + problem.problem_id + ": empty solution pool");
  if (!student.capabilities().can_score) {
    throw CapabilityError("student backend '" + student.identity() + "' cannot score text");
  }
  const std::string context = problem_context(problem, prompt_prefix);
  auto scores = detail::map_indices(pool.size(), fan_out(student, pool.size()), [&](std::size_t i) {
    if (pool[i].empty()) return std::vector<TokenScore>{};
    return student.score_text(context, pool[i]);
  });

  PoolPick pick;
  pick.ppls.assign(pool.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<ScoredChunk> scored;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (scores[i].empty()) continue;
    scored.push_back(make_scored_chunk(pool[i], std::move(scores[i]), true, 0));
    pick.ppls[i] = scored.back().ppl;
    origin.push_back(i);
  }
  if (scored.empty()) throw ValidationError("problem " + problem.problem_id + ": no scorable solution in pool");
  std::size_t chosen = select_candidate(scored, strategy);
  pick.index = origin[chosen];
  pick.scored = std::move(scored[chosen]);
  return pick;
}

}  // namespace chunksel
