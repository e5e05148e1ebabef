#include "chunksel/cli.hpp"

#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chunksel/config.hpp"
#include "chunksel/errors.hpp"
#include "chunksel/metrics.hpp"

namespace chunksel {
namespace {

namespace fs = std::filesystem;

extern "C" void on_signal(int) { drain_flag().store(true); }

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool dry_run = false;
  std::string resume;
  std::optional<int> stop_after;
};

// Flag overrides shared by the run subcommands; flags win over the file.
struct RunFlags {
  std::string out;
  std::string problems;
  std::string pools;
  std::string exclude_run;
  std::optional<int> chunk_size;
  std::optional<int> max_tokens;
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<int> top_k;
  std::string strategy;
  std::optional<std::uint64_t> strategy_seed;
  std::string schedule;
  std::optional<int> beam_width;
  std::optional<int> attempts;
  std::optional<int> target;
  std::optional<int> samples;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--out", f.out, "Run directory to create");
  cmd->add_option("--problems", f.problems, "Problems file (JSONL)");
  cmd->add_option("--chunk-size", f.chunk_size, "Teacher tokens per chunk step");
  cmd->add_option("--max-tokens", f.max_tokens, "Teacher token budget per trajectory");
  cmd->add_option("--temperature", f.temperature);
  cmd->add_option("--top-p", f.top_p);
  cmd->add_option("--top-k", f.top_k);
}

RunConfig base_config(const GlobalFlags& g) {
  if (!g.config.empty()) return RunConfig::load(g.config);
  if (!g.resume.empty()) return RunConfig::load(fs::path(g.resume) / RunStore::kConfigFile);
  throw ValidationError("--config is required (or --resume with a run directory)");
}

void apply(RunConfig& c, const GlobalFlags& g, const RunFlags& f) {
  if (g.seed) {
    c.seed = *g.seed;
    c.strategy.rng_seed = *g.seed;
  }
  if (g.workers) c.workers = *g.workers;
  if (!g.resume.empty()) c.output_dir = fs::absolute(g.resume).lexically_normal();
  auto path = [](const std::string& s) { return fs::absolute(s).lexically_normal(); };
  if (!f.out.empty()) c.output_dir = path(f.out);
  if (!f.problems.empty()) c.problems_path = path(f.problems);
  if (!f.pools.empty()) c.pools_path = path(f.pools);
  if (!f.exclude_run.empty()) c.exclude_run = path(f.exclude_run);
  if (f.chunk_size) c.generation.chunk_size = *f.chunk_size;
  if (f.max_tokens) c.generation.max_generation_tokens = *f.max_tokens;
  if (f.temperature) c.generation.temperature = *f.temperature;
  if (f.top_p) c.generation.top_p = *f.top_p;
  if (f.top_k) c.generation.top_k = *f.top_k;
  if (!f.strategy.empty()) c.strategy.kind = parse_strategy_kind(f.strategy);
  if (f.strategy_seed) c.strategy.rng_seed = *f.strategy_seed;
  if (!f.schedule.empty()) c.schedule = SamplingSchedule::parse(f.schedule);
  if (f.beam_width) c.beam_width = *f.beam_width;
  if (f.attempts) c.cold_start_attempts = *f.attempts;
  if (f.target) c.cold_start_target = *f.target;
  if (f.samples) c.baseline_samples = *f.samples;
}

int run_mode(DataMode mode, const GlobalFlags& g, const RunFlags& f, std::ostream& out, std::ostream& err) {
  RunConfig config = base_config(g);
  config.mode = mode;
  apply(config, g, f);
  config.validate();
  if (g.dry_run) {
    out << config.to_json().dump(2) << "\n";
    return kExitOk;
  }

  RunControl control;
  control.resume = !g.resume.empty();
  control.cancel = &drain_flag();
  int finished = 0;
  control.on_problem_done = [&](const ProblemEntry& e) {
    ++finished;
    if (e.status == ProblemStatus::Failed) err << "problem " << e.problem_id << " failed: " << e.error << "\n";
    if (g.stop_after && finished >= *g.stop_after) drain_flag().store(true);
  };

  auto outcome = execute_run(config, control);
  const auto& m = outcome.result.manifest;
  const auto c = m.counters();
  out << "run " << m.run_id << " (" << to_string(m.mode) << ") in " << outcome.run_dir.string() << "\n";
  out << "  total " << c.total << ", kept " << c.kept << ", filtered " << c.filtered << " (unverifiable "
      << c.unverifiable << "), failed " << c.failed << ", pending " << c.pending << "\n";
  out << "  candidates " << c.candidates << ", teacher tokens sampled " << c.tokens_sampled << ", selected "
      << c.tokens_selected << "\n";
  for (const auto& w : m.warnings) err << "warning: " << w << "\n";

  if (outcome.result.interrupted) {
    err << "interrupted with " << c.pending << " problems pending; resume with --resume "
        << outcome.run_dir.string() << "\n";
    return kExitInterrupted;
  }
  // A cold start that reached its target leaves the rest unattempted; they stay
  // available to later runs that hold this one out.
  if (c.pending > 0) out << "  target reached; " << c.pending << " problems left unattempted\n";
  if (c.failed > 0) return kExitPartial;
  if (mode == DataMode::ColdStart && c.kept == 0) {
    err << "cold start kept no records\n";
    return kExitPartial;
  }
  return kExitOk;
}

struct StatsFlags {
  std::vector<std::string> run_dirs;
  bool trace = false;
  int trace_chunk = 256;
  bool cost = false;
  std::string out;
};

int run_stats(const GlobalFlags& g, const StatsFlags& f, std::ostream& out) {
  std::vector<std::string> missing;
  for (const auto& d : f.run_dirs) {
    if (!fs::exists(fs::path(d) / RunStore::kManifestFile)) missing.push_back(d);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw ValidationError("not run directories (no " + std::string(RunStore::kManifestFile) + "):" + list);
  }
  if (f.trace_chunk < 1) throw ValidationError("--trace-chunk must be >= 1");
  const fs::path out_dir = fs::weakly_canonical(fs::absolute(f.out));
  if (fs::exists(out_dir / RunStore::kManifestFile)) throw ValidationError("--out must not be a run directory");
  if (g.dry_run) {
    for (const auto& d : f.run_dirs) out << d << "\n";
    return kExitOk;
  }

  std::optional<BackendConfig> override_scorer;
  if (!g.config.empty()) override_scorer = RunConfig::load(g.config).student;

  std::vector<RunManifest> manifests;
  std::string stats_table, trace_table;
  nlohmann::json summary = nlohmann::json::object();
  bool first_trace = true, first_stats = true;
  for (const auto& d : f.run_dirs) {
    auto manifest = RunStore::load_manifest(d);
    const auto dataset = fs::path(d) / RunStore::kDatasetFile;
    auto records = read_dataset(fs::exists(dataset) ? dataset : fs::path(d) / RunStore::kJournalFile);
    auto snapshot = RunConfig::from_json(manifest.config, fs::path(d));
    auto scorer_cfg = override_scorer ? override_scorer : snapshot.student;
    nlohmann::json run_summary = {{"mode", to_string(manifest.mode)}, {"counters", nullptr}};
    const auto c = manifest.counters();
    run_summary["counters"] = {{"total", c.total},       {"kept", c.kept},
                               {"filtered", c.filtered}, {"failed", c.failed},
                               {"pending", c.pending},   {"candidates", c.candidates},
                               {"tokens_sampled", c.tokens_sampled}, {"tokens_selected", c.tokens_selected}};
    if (scorer_cfg) {
      auto scorer = make_backend(*scorer_cfg);
      auto stats = dataset_stats(records, *scorer, c.attempted(), snapshot.prompt_prefix);
      auto table = stats_tsv(manifest.run_id, stats);
      stats_table += first_stats ? table : table.substr(table.find('\n') + 1);
      first_stats = false;
      run_summary["stats"] = stats.to_json();
      if (f.trace) {
        std::vector<ChunkTrace> traces;
        for (const auto& r : records) traces.push_back(chunk_trace(r, *scorer, f.trace_chunk, snapshot.prompt_prefix));
        auto t = trace_tsv(manifest.run_id, traces);
        trace_table += first_trace ? t : t.substr(t.find('\n') + 1);
        first_trace = false;
      }
    } else {
      run_summary["stats"] = nullptr;
      run_summary["note"] = "no student scorer configured; PPL statistics skipped";
    }
    summary[manifest.run_id] = run_summary;
    manifests.push_back(std::move(manifest));
  }

  fs::create_directories(out_dir);
  if (!stats_table.empty()) write_file_atomic(out_dir / "stats.tsv", stats_table);
  if (f.trace && !trace_table.empty()) write_file_atomic(out_dir / "trace.tsv", trace_table);
  nlohmann::json doc = {{"runs", summary}};
  if (f.cost) {
    auto report = cost_report(manifests);
    write_file_atomic(out_dir / "cost.tsv", cost_tsv(report));
    write_file_atomic(out_dir / "cost_ratios.tsv", ratio_tsv(report));
    doc["cost"] = report.to_json();
    for (const auto& w : report.warnings) out << "warning: " << w << "\n";
  }
  write_file_atomic(out_dir / "summary.json", doc.dump(2) + "\n");
  out << "wrote report for " << manifests.size() << " run(s) to " << out_dir.string() << "\n";
  return kExitOk;
}

}  // namespace

std::atomic<bool>& drain_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

void install_signal_handlers() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  drain_flag().store(false);

  CLI::App app{"Builds distillation datasets by chunk-wise self-selection of teacher samples."};
  app.set_version_flag("--version", std::string("chunksel ") + CHUNKSEL_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config, "Run config (JSON)");
  app.add_option("--seed", g.seed, "Run seed (also the random strategy's seed)");
  app.add_option("--workers", g.workers, "Problems processed in parallel");
  app.add_flag("--dry-run", g.dry_run, "Print the resolved config and exit");
  app.add_option("--resume", g.resume, "Continue the run in this directory");
  app.add_option("--stop-after", g.stop_after)->group("");

  RunFlags cold_flags, distill_flags, base_flags;

  auto* cold = app.add_subcommand("coldstart", "Rejection-sample a verified cold-start dataset from the teacher");
  add_run_flags(cold, cold_flags);
  cold->add_option("--attempts", cold_flags.attempts, "Samples per problem before giving up");
  cold->add_option("--target", cold_flags.target, "Stop after this many kept records");

  auto* distill = app.add_subcommand("distill", "Build the self-selected dataset");
  add_run_flags(distill, distill_flags);
  distill->add_option("--strategy", distill_flags.strategy, "low | high | random")
      ->check(CLI::IsMember({"low", "high", "random"}));
  distill->add_option("--strategy-seed", distill_flags.strategy_seed);
  distill->add_option("--schedule", distill_flags.schedule, "e.g. head=16,8;tail=4");
  distill->add_option("--beam-width", distill_flags.beam_width);
  distill->add_option("--exclude-run", distill_flags.exclude_run, "Cold-start run whose problems are held out");

  std::string baseline_kind;
  auto* baseline = app.add_subcommand("baseline", "Build a baseline dataset");
  baseline->add_option("kind", baseline_kind, "standard-kd | self-distill | pool-select")
      ->required()
      ->check(CLI::IsMember({"standard-kd", "self-distill", "pool-select"}));
  add_run_flags(baseline, base_flags);
  baseline->add_option("--samples", base_flags.samples, "Samples per problem (first correct is kept)");
  baseline->add_option("--pools", base_flags.pools, "Solution pools (JSONL) for pool-select");
  baseline->add_option("--strategy", base_flags.strategy, "low | high | random")
      ->check(CLI::IsMember({"low", "high", "random"}));
  baseline->add_option("--strategy-seed", base_flags.strategy_seed);
  baseline->add_option("--exclude-run", base_flags.exclude_run);

  StatsFlags sf;
  auto* stats = app.add_subcommand("stats", "PPL, length, trace and cost reports over run directories");
  stats->add_option("run_dirs", sf.run_dirs, "Run directories")->required();
  stats->add_flag("--trace", sf.trace, "Per-window PPL traces");
  stats->add_option("--trace-chunk", sf.trace_chunk, "Trace window in student tokens");
  stats->add_flag("--cost", sf.cost, "Sampling-cost table");
  stats->add_option("--out", sf.out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*cold) return run_mode(DataMode::ColdStart, g, cold_flags, out, err);
    if (*distill) return run_mode(DataMode::SSD, g, distill_flags, out, err);
    if (*baseline) {
      DataMode mode = baseline_kind == "standard-kd"    ? DataMode::StandardKD
                      : baseline_kind == "self-distill" ? DataMode::SelfDistill
                                                        : DataMode::PoolSelect;
      return run_mode(mode, g, base_flags, out, err);
    }
    if (*stats) return run_stats(g, sf, out);
  } catch (const ResumeMismatchError& e) {
    err << "error: " << e.what() << "\n";
    for (const auto& line : e.diff()) err << "  " << line << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const StartupError& e) {
    err << "backend startup failed: " << e.what() << "\n";
    return kExitStartup;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace chunksel
