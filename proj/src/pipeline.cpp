#include "chunksel/pipeline.hpp"

#include <algorithm>
#include <functional>
#include <fstream>
#include <set>
#include <thread>

#include "chunksel/errors.hpp"
#include "chunksel/rng.hpp"

namespace chunksel {

const char* to_string(ProblemStatus status) {
  switch (status) {
    case ProblemStatus::Pending: return "pending";
    case ProblemStatus::Done: return "done";
    case ProblemStatus::Failed: return "failed";
  }
  return "pending";
}

const char* to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::None: return "none";
    case Outcome::Kept: return "kept";
    case Outcome::Filtered: return "filtered";
    case Outcome::Failed: return "failed";
    case Outcome::Unverifiable: return "unverifiable";
  }
  return "none";
}

namespace {

ProblemStatus parse_status(const std::string& s) {
  for (auto v : {ProblemStatus::Pending, ProblemStatus::Done, ProblemStatus::Failed}) {
    if (s == to_string(v)) return v;
  }
  throw ValidationError("manifest: unknown status '" + s + "'");
}

Outcome parse_outcome(const std::string& s) {
  for (auto v : {Outcome::None, Outcome::Kept, Outcome::Filtered, Outcome::Failed, Outcome::Unverifiable}) {
    if (s == to_string(v)) return v;
  }
  throw ValidationError("manifest: unknown outcome '" + s + "'");
}

nlohmann::json entry_json(const ProblemEntry& e) {
  return {{"problem_id", e.problem_id},
          {"status", to_string(e.status)},
          {"outcome", to_string(e.outcome)},
          {"error", e.error},
          {"steps", e.steps},
          {"candidates", e.candidates},
          {"tokens_sampled", e.tokens_sampled},
          {"tokens_selected", e.tokens_selected},
          {"per_step_candidates", e.per_step_candidates}};
}

ProblemEntry entry_from_json(const nlohmann::json& j) {
  ProblemEntry e;
  e.problem_id = j.at("problem_id").get<std::string>();
  e.status = parse_status(j.at("status").get<std::string>());
  e.outcome = parse_outcome(j.at("outcome").get<std::string>());
  e.error = j.value("error", std::string());
  e.steps = j.value("steps", 0);
  e.candidates = j.value("candidates", std::int64_t{0});
  e.tokens_sampled = j.value("tokens_sampled", std::int64_t{0});
  e.tokens_selected = j.value("tokens_selected", std::int64_t{0});
  e.per_step_candidates = j.value("per_step_candidates", std::vector<int>{});
  return e;
}

}  // namespace

RunCounters RunManifest::counters() const {
  RunCounters c;
  c.total = static_cast<std::int64_t>(problems.size());
  for (const auto& p : problems) {
    switch (p.status) {
      case ProblemStatus::Pending: ++c.pending; break;
      case ProblemStatus::Failed: ++c.failed; break;
      case ProblemStatus::Done:
        if (p.outcome == Outcome::Kept) {
          ++c.kept;
        } else {
          ++c.filtered;
          if (p.outcome == Outcome::Unverifiable) ++c.unverifiable;
        }
        break;
    }
    if (p.status != ProblemStatus::Pending) {
      c.candidates += p.candidates;
      c.tokens_sampled += p.tokens_sampled;
      c.tokens_selected += p.tokens_selected;
    }
  }
  return c;
}

bool RunManifest::complete() const {
  return std::none_of(problems.begin(), problems.end(),
                      [](const ProblemEntry& p) { return p.status == ProblemStatus::Pending; });
}

ProblemEntry* RunManifest::find(const std::string& id) {
  auto it = std::lower_bound(problems.begin(), problems.end(), id,
                             [](const ProblemEntry& e, const std::string& k) { return e.problem_id < k; });
  return it != problems.end() && it->problem_id == id ? &*it : nullptr;
}

const ProblemEntry* RunManifest::find(const std::string& id) const {
  return const_cast<RunManifest*>(this)->find(id);
}

nlohmann::json RunManifest::to_json() const {
  auto c = counters();
  nlohmann::json problems_json = nlohmann::json::array();
  for (const auto& p : problems) problems_json.push_back(entry_json(p));
  return {{"run_id", run_id},
          {"version", version},
          {"mode", chunksel::to_string(mode)},
          {"config", config},
          {"counters",
           {{"total", c.total},
            {"pending", c.pending},
            {"kept", c.kept},
            {"filtered", c.filtered},
            {"failed", c.failed},
            {"unverifiable", c.unverifiable},
            {"candidates", c.candidates},
            {"tokens_sampled", c.tokens_sampled},
            {"tokens_selected", c.tokens_selected}}},
          {"problems", problems_json},
          {"warnings", warnings}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.version = j.value("version", std::string());
    m.mode = parse_data_mode(j.at("mode").get<std::string>());
    m.config = j.value("config", nlohmann::json::object());
    for (const auto& p : j.at("problems")) m.problems.push_back(entry_from_json(p));
    m.warnings = j.value("warnings", std::vector<std::string>{});
    std::sort(m.problems.begin(), m.problems.end(),
              [](const ProblemEntry& a, const ProblemEntry& b) { return a.problem_id < b.problem_id; });
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
}

namespace {

// Journal records, minus a final line cut short by a hard kill mid-append.
// Its problem is still pending in the manifest, which is flushed after the
// append, so nothing is lost.
// A hard kill can leave a torn last line; it is dropped and cut from the file
// so later appends start on a fresh line.
std::vector<DatasetRecord> read_journal(const std::filesystem::path& path) {
  std::string text = read_file(path);
  if (!text.empty() && text.back() != '\n') {
    const auto cut = text.rfind('\n');
    text.erase(cut == std::string::npos ? 0 : cut + 1);
    std::filesystem::resize_file(path, text.size());
  }
  std::vector<DatasetRecord> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    const auto line = std::string_view(text).substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("corrupt journal " + path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

RunStore RunStore::create(const std::filesystem::path& dir, RunManifest manifest) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (fs::exists(dir / kManifestFile)) {
    throw ValidationError("run directory " + dir.string() + " already holds a run (use --resume)");
  }
  RunStore store;
  store.dir_ = dir;
  store.manifest_ = std::move(manifest);
  write_file_atomic(dir / kConfigFile, store.manifest_.config.dump(2) + "\n");
  write_file_atomic(dir / kVersionFile, std::string("chunksel ") + store.manifest_.version + "\n");
  write_file_atomic(dir / kJournalFile, "");
  store.flush_manifest_locked();
  return store;
}

RunManifest RunStore::load_manifest(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / kManifestFile));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cannot parse " + (dir / kManifestFile).string() + ": " + e.what());
  }
  return RunManifest::from_json(j);
}

RunStore RunStore::open(const std::filesystem::path& dir) {
  RunStore store;
  store.dir_ = dir;
  store.manifest_ = load_manifest(dir);
  if (std::filesystem::exists(dir / kJournalFile)) {
    for (const auto& r : read_journal(dir / kJournalFile)) {
      const auto* entry = store.manifest_.find(r.problem_id);
      if (entry && entry->status == ProblemStatus::Done && entry->outcome == Outcome::Kept) {
        store.kept_[r.problem_id] = r;
      }
    }
  }
  for (const auto& p : store.manifest_.problems) {
    if (p.status == ProblemStatus::Done && p.outcome == Outcome::Kept && !store.kept_.count(p.problem_id)) {
      throw ValidationError("run " + dir.string() + ": manifest marks '" + p.problem_id +
                            "' kept but the journal has no record for it");
    }
  }
  store.rewrite_journal_locked();
  return store;
}

RunManifest RunStore::manifest() const {
  std::lock_guard lock(*mu_);
  return manifest_;
}

std::vector<DatasetRecord> RunStore::kept_records() const {
  std::lock_guard lock(*mu_);
  std::vector<DatasetRecord> out;
  for (const auto& [id, r] : kept_) out.push_back(r);
  return out;
}

ProblemStatus RunStore::status_of(const std::string& problem_id) const {
  std::lock_guard lock(*mu_);
  const auto* e = manifest_.find(problem_id);
  return e ? e->status : ProblemStatus::Pending;
}

void RunStore::record(const ProblemEntry& entry, const std::optional<DatasetRecord>& kept) {
  std::lock_guard lock(*mu_);
  auto* slot = manifest_.find(entry.problem_id);
  if (!slot) throw ValidationError("run store: unknown problem '" + entry.problem_id + "'");
  if (kept) {
    kept_[entry.problem_id] = *kept;
    if (!in_memory()) {
      std::ofstream journal(dir_ / kJournalFile, std::ios::app | std::ios::binary);
      journal << chunksel::to_json(*kept).dump() << "\n";
      journal.flush();
      if (!journal) throw Error("cannot append to " + (dir_ / kJournalFile).string());
    }
  } else {
    kept_.erase(entry.problem_id);
  }
  *slot = entry;
  flush_manifest_locked();
}

void RunStore::reset_to_pending(const std::vector<std::string>& problem_ids) {
  std::lock_guard lock(*mu_);
  for (const auto& id : problem_ids) {
    if (auto* slot = manifest_.find(id)) {
      *slot = ProblemEntry{};
      slot->problem_id = id;
    }
    kept_.erase(id);
  }
  rewrite_journal_locked();
  flush_manifest_locked();
}

void RunStore::add_warning(const std::string& warning) {
  std::lock_guard lock(*mu_);
  manifest_.warnings.push_back(warning);
  flush_manifest_locked();
}

void RunStore::finalize() {
  std::lock_guard lock(*mu_);
  if (in_memory()) return;
  std::vector<DatasetRecord> records;
  for (const auto& [id, r] : kept_) records.push_back(r);
  write_dataset(dir_ / kDatasetFile, records);
  write_sft(dir_ / kSftFile, records);
}

void RunStore::flush_manifest_locked() {
  if (in_memory()) return;
  write_file_atomic(dir_ / kManifestFile, manifest_.to_json().dump(2) + "\n");
}

void RunStore::rewrite_journal_locked() {
  if (in_memory()) return;
  std::string out;
  for (const auto& [id, r] : kept_) out += chunksel::to_json(r).dump() + "\n";
  write_file_atomic(dir_ / kJournalFile, out);
}

void check_disjoint(const std::vector<std::string>& a, const std::set<std::string>& b) {
  std::vector<std::string> shared;
  for (const auto& id : a) {
    if (b.count(id)) shared.push_back(id);
  }
  if (shared.empty()) return;
  std::string list;
  for (std::size_t i = 0; i < shared.size() && i < 10; ++i) list += (i ? ", " : "") + shared[i];
  if (shared.size() > 10) list += ", ...";
  throw ValidationError(std::to_string(shared.size()) + " problem(s) overlap the excluded set: " + list);
}

RunStore RunStore::memory(RunManifest manifest) {
  RunStore store;
  store.manifest_ = std::move(manifest);
  return store;
}

void RunStore::bind_problems(const std::vector<std::string>& ids, DataMode mode) {
  std::lock_guard lock(*mu_);
  if (manifest_.problems.empty()) {
    manifest_.mode = mode;
    for (const auto& id : ids) {
      ProblemEntry e;
      e.problem_id = id;
      manifest_.problems.push_back(std::move(e));
    }
    flush_manifest_locked();
    return;
  }
  std::vector<std::string> diff;
  if (manifest_.mode != mode) diff.push_back(std::string("mode: ") + to_string(manifest_.mode) + " -> " + to_string(mode));
  std::set<std::string> have, want(ids.begin(), ids.end());
  for (const auto& p : manifest_.problems) have.insert(p.problem_id);
  for (const auto& id : have) {
    if (!want.count(id)) diff.push_back("problem " + id + ": in run, missing from input");
  }
  for (const auto& id : want) {
    if (!have.count(id)) diff.push_back("problem " + id + ": in input, missing from run");
  }
  if (!diff.empty()) throw ResumeMismatchError("input does not match the run being resumed", diff);
}

std::vector<std::string> config_diff(const nlohmann::json& before, const nlohmann::json& after,
                                     const std::set<std::string>& ignore) {
  std::vector<std::string> out;
  std::function<void(const std::string&, const nlohmann::json&, const nlohmann::json&, bool)> walk =
      [&](const std::string& path, const nlohmann::json& a, const nlohmann::json& b, bool top) {
        if (a.is_object() && b.is_object()) {
          std::set<std::string> keys;
          for (const auto& [k, v] : a.items()) keys.insert(k);
          for (const auto& [k, v] : b.items()) keys.insert(k);
          for (const auto& k : keys) {
            if (top && ignore.count(k)) continue;
            const std::string sub = path.empty() ? k : path + "." + k;
            static const nlohmann::json missing = "<absent>";
            walk(sub, a.contains(k) ? a[k] : missing, b.contains(k) ? b[k] : missing, false);
          }
          return;
        }
        if (a != b) out.push_back(path + ": " + a.dump() + " -> " + b.dump());
      };
  walk("", before, after, true);
  return out;
}

namespace {

struct Work {
  ProblemEntry entry;
  std::optional<DatasetRecord> record;
};

using ProcessFn = std::function<Work(const Problem&)>;

// Processes problems in problem_id order over `options.workers` threads,
// skipping those already Done in the store.
class Driver {
 public:
  Driver(DataMode mode, const std::vector<Problem>& problems, const PipelineOptions& options) : options_(options) {
    for (const auto& p : problems) {
      if (!options.exclude_ids.count(p.problem_id)) order_.push_back(&p);
    }
    std::sort(order_.begin(), order_.end(),
              [](const Problem* a, const Problem* b) { return a->problem_id < b->problem_id; });
    std::vector<std::string> ids;
    for (const auto* p : order_) {
      if (!ids.empty() && ids.back() == p->problem_id) {
        throw ValidationError("duplicate problem_id '" + p->problem_id + "'");
      }
      ids.push_back(p->problem_id);
    }
    if (options.store) {
      store_ = options.store;
    } else {
      local_ = RunStore::memory(RunManifest{});
      store_ = &local_;
    }
    store_->bind_problems(ids, mode);
  }

  // With target >= 0 (cold start) admission stops once `target` kept records
  // exist; results past the target-th kept record, in problem order, are reset
  // to pending so the outcome does not depend on the worker count.
  BuildResult run(const ProcessFn& fn, int target = -1) {
    std::mutex admit_mu;
    std::mutex done_mu;
    std::size_t next = 0;
    std::int64_t kept = store_->manifest().counters().kept;
    std::atomic<bool> interrupted{false};

    auto worker = [&] {
      for (;;) {
        std::size_t idx;
        {
          std::lock_guard lock(admit_mu);
          if (options_.cancel && options_.cancel->load()) {
            interrupted = true;
            return;
          }
          if (target >= 0 && kept >= target) return;
          if (next >= order_.size()) return;
          idx = next++;
        }
        const Problem& problem = *order_[idx];
        if (store_->status_of(problem.problem_id) == ProblemStatus::Done) continue;
        Work w;
        try {
          w = fn(problem);
        } catch (const std::exception& e) {
          w = Work{};
          w.entry.status = ProblemStatus::Failed;
          w.entry.outcome = Outcome::Failed;
          w.entry.error = e.what();
        }
        w.entry.problem_id = problem.problem_id;
        store_->record(w.entry, w.record);
        if (w.entry.outcome == Outcome::Kept) {
          std::lock_guard lock(admit_mu);
          ++kept;
        }
        if (options_.on_problem_done) {
          std::lock_guard lock(done_mu);
          options_.on_problem_done(w.entry);
        }
      }
    };

    {
      std::vector<std::jthread> pool;
      for (int i = 1; i < std::max(1, options_.workers); ++i) pool.emplace_back(worker);
      worker();
    }

    if (target >= 0) apply_target(target);
    store_->finalize();

    BuildResult result;
    result.manifest = store_->manifest();
    result.records = store_->kept_records();
    result.interrupted = interrupted.load() && !result.manifest.complete();
    return result;
  }

 private:
  void apply_target(int target) {
    auto m = store_->manifest();
    std::int64_t kept = 0;
    std::vector<std::string> reset;
    for (const auto* p : order_) {
      const auto* e = m.find(p->problem_id);
      if (kept >= target && e->status != ProblemStatus::Pending) reset.push_back(p->problem_id);
      if (e->status == ProblemStatus::Done && e->outcome == Outcome::Kept) ++kept;
    }
    if (!reset.empty()) store_->reset_to_pending(reset);
    bool drained = options_.cancel && options_.cancel->load();
    if (kept < target && !drained) {
      store_->add_warning("target_count " + std::to_string(target) + " not reached: kept " + std::to_string(kept) +
                          " after exhausting " + std::to_string(order_.size()) + " problems");
    }
  }

  const PipelineOptions& options_;
  std::vector<const Problem*> order_;
  RunStore local_;
  RunStore* store_ = nullptr;
};

Work unverifiable(const Problem& p) {
  Work w;
  w.entry.problem_id = p.problem_id;
  w.entry.status = ProblemStatus::Done;
  w.entry.outcome = Outcome::Unverifiable;
  w.entry.error = "gold answer absent; excluded from rejection filtering";
  return w;
}

// Full-length single-shot sampling, first verified-correct attempt kept.
Work single_shot(const Problem& p, ModelBackend& generator, const GenerationParams& params, int attempts,
                 DataMode mode, const PipelineOptions& options) {
  if (p.unverifiable()) return unverifiable(p);
  Work w;
  w.entry.problem_id = p.problem_id;
  const std::string context = problem_context(p, options.prompt_prefix);
  for (int a = 0; a < attempts; ++a) {
    SampleRequest req;
    req.problem_id = p.problem_id;
    req.step = 0;
    req.first_candidate_index = a;
    req.run_seed = options.seed;
    req.context = context;
    req.n = 1;
    req.token_budget = params.max_generation_tokens;
    req.params = params;
    auto samples = generator.sample_continuations(req);
    if (samples.size() != 1) throw BackendError("generator returned " + std::to_string(samples.size()) + " samples");
    const auto& s = samples.front();
    w.entry.steps += 1;
    w.entry.candidates += 1;
    w.entry.tokens_sampled += s.teacher_token_count;
    auto extracted = extract_answer(s.text);
    if (!answers_match(extracted, p.gold_answer)) continue;
    DatasetRecord r;
    r.problem_id = p.problem_id;
    r.prompt = p.prompt;
    r.trajectory_text = s.text;
    r.extracted_answer = extracted.raw;
    r.correct = true;
    r.teacher_token_count = s.teacher_token_count;
    r.mode = mode;
    r.chunk_size = params.max_generation_tokens;
    r.schedule_descriptor = "single-shot;attempts=" + std::to_string(attempts);
    r.seed = options.seed;
    w.entry.tokens_selected = s.teacher_token_count;
    w.record = std::move(r);
    break;
  }
  if (w.record) w.record->teacher_tokens_sampled_total = w.entry.tokens_sampled;
  w.entry.status = ProblemStatus::Done;
  w.entry.outcome = w.record ? Outcome::Kept : Outcome::Filtered;
  return w;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw CapabilityError(what);
}

}  // namespace

BuildResult build_cold_start(const std::vector<Problem>& problems, ModelBackend& teacher,
                             const GenerationParams& params, int attempts_per_problem, int target_count,
                             const PipelineOptions& options) {
  params.validate();
  if (attempts_per_problem < 1) throw ValidationError("attempts_per_problem must be >= 1");
  if (target_count < 0) throw ValidationError("target_count must be >= 0");
  require(teacher.capabilities().can_sample, "teacher '" + teacher.identity() + "' cannot sample");
  Driver driver(DataMode::ColdStart, problems, options);
  return driver.run(
      [&](const Problem& p) {
        return single_shot(p, teacher, params, attempts_per_problem, DataMode::ColdStart, options);
      },
      target_count);
}

BuildResult build_ssd_dataset(const std::vector<Problem>& problems, ModelBackend& teacher, ModelBackend& student,
                              const GenerationParams& params, const SamplingSchedule& schedule,
                              const SelectionStrategy& strategy, int beam_width, const PipelineOptions& options) {
  params.validate();
  if (beam_width < 1) throw ValidationError("beam_width must be >= 1");
  require(teacher.capabilities().can_sample, "teacher '" + teacher.identity() + "' cannot sample");
  require(student.capabilities().can_score, "student '" + student.identity() + "' cannot score text");
  Driver driver(DataMode::SSD, problems, options);
  return driver.run([&](const Problem& p) {
    if (p.unverifiable()) return unverifiable(p);
    SelectionOptions so;
    so.prompt_prefix = options.prompt_prefix;
    so.run_seed = options.seed;
    so.observer = options.step_observer;
    auto result = run_self_selection(p, teacher, student, params, schedule, strategy, beam_width, so);

    Work w;
    w.entry.problem_id = p.problem_id;
    w.entry.status = ProblemStatus::Done;
    w.entry.steps = result.steps;
    w.entry.candidates = result.candidates_consumed;
    w.entry.tokens_sampled = result.teacher_tokens_sampled;
    w.entry.tokens_selected = result.best.cum_teacher_token_count;
    w.entry.per_step_candidates = result.per_step_candidates;

    std::string text = result.best.text();
    auto extracted = extract_answer(text);
    if (!answers_match(extracted, p.gold_answer)) {
      w.entry.outcome = Outcome::Filtered;
      return w;
    }
    DatasetRecord r;
    r.problem_id = p.problem_id;
    r.prompt = p.prompt;
    r.trajectory_text = std::move(text);
    r.extracted_answer = extracted.raw;
    r.correct = true;
    r.trajectory_ppl = result.best.ppl();
    r.student_token_count = result.best.cum_token_count;
    r.teacher_token_count = result.best.cum_teacher_token_count;
    r.teacher_tokens_sampled_total = result.teacher_tokens_sampled;
    r.mode = DataMode::SSD;
    r.strategy = strategy.kind;
    r.chunk_size = params.chunk_size;
    r.schedule_descriptor = schedule.descriptor();
    r.seed = options.seed;
    w.entry.outcome = Outcome::Kept;
    w.record = std::move(r);
    return w;
  });
}

BuildResult build_standard_kd(const std::vector<Problem>& problems, ModelBackend& teacher,
                              const GenerationParams& params, int samples_per_problem,
                              const PipelineOptions& options) {
  params.validate();
  if (samples_per_problem < 1) throw ValidationError("samples_per_problem must be >= 1");
  require(teacher.capabilities().can_sample, "teacher '" + teacher.identity() + "' cannot sample");
  Driver driver(DataMode::StandardKD, problems, options);
  return driver.run([&](const Problem& p) {
    return single_shot(p, teacher, params, samples_per_problem, DataMode::StandardKD, options);
  });
}

BuildResult build_self_distill(const std::vector<Problem>& problems, ModelBackend& student,
                               const GenerationParams& params, int samples_per_problem,
                               const PipelineOptions& options) {
  params.validate();
  if (samples_per_problem < 1) throw ValidationError("samples_per_problem must be >= 1");
  require(student.capabilities().can_sample, "student '" + student.identity() + "' cannot sample");
  Driver driver(DataMode::SelfDistill, problems, options);
  return driver.run([&](const Problem& p) {
    return single_shot(p, student, params, samples_per_problem, DataMode::SelfDistill, options);
  });
}

DatasetRecord select_from_pool(const Problem& problem, const std::vector<std::string>& pool, ModelBackend& student,
                               const SelectionStrategy& strategy, std::string_view prompt_prefix,
                               int nominal_chunk_size, std::uint64_t seed) {
  auto pick = pick_from_pool(problem, pool, student, strategy.derived(problem.problem_id, 1), prompt_prefix);
  auto extracted = extract_answer(pick.scored.text);
  DatasetRecord r;
  r.problem_id = problem.problem_id;
  r.prompt = problem.prompt;
  r.trajectory_text = pick.scored.text;
  r.extracted_answer = extracted.raw;
  r.correct = !problem.unverifiable() && answers_match(extracted, problem.gold_answer);
  r.trajectory_ppl = pick.scored.ppl;
  r.student_token_count = pick.scored.token_count;
  r.mode = DataMode::PoolSelect;
  r.strategy = strategy.kind;
  r.chunk_size = nominal_chunk_size;
  r.schedule_descriptor = "pool=" + std::to_string(pool.size());
  r.seed = seed;
  return r;
}

BuildResult build_pool_select(const std::vector<Problem>& problems,
                              const std::map<std::string, std::vector<std::string>>& pools,
                              ModelBackend& student, const SelectionStrategy& strategy, int nominal_chunk_size,
                              const PipelineOptions& options) {
  require(student.capabilities().can_score, "student '" + student.identity() + "' cannot score text");
  Driver driver(DataMode::PoolSelect, problems, options);
  return driver.run([&](const Problem& p) {
    if (p.unverifiable()) return unverifiable(p);
    auto it = pools.find(p.problem_id);
    if (it == pools.end() || it->second.empty()) {
      throw ValidationError("problem " + p.problem_id + ": empty solution pool");
    }
    Work w;
    w.entry.problem_id = p.problem_id;
    w.entry.status = ProblemStatus::Done;
    w.entry.steps = 1;
    auto record = select_from_pool(p, it->second, student, strategy, options.prompt_prefix, nominal_chunk_size,
                                   options.seed);
    if (record.correct) {
      w.entry.outcome = Outcome::Kept;
      w.record = std::move(record);
    } else {
      w.entry.outcome = Outcome::Filtered;
    }
    return w;
  });
}

}  // namespace chunksel
