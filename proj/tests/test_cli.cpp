#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "chunksel/cli.hpp"
#include "chunksel/dataset.hpp"
#include "chunksel/pipeline.hpp"
#include "fixtures.hpp"

using namespace chunksel;
using namespace chunksel::testing;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "chunksel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// A workspace with toy teacher/student specs, problems and a config file.
struct Workspace {
  TempDir dir{"cli"};
  fs::path config = dir / "config.json";

  explicit Workspace(ToyModelSpec teacher = coin_teacher(), int problem_count = 12,
                     ToyModelSpec student = coin_student()) {
    write_text(dir / "teacher.toy", teacher.serialize());
    write_text(dir / "student.toy", student.serialize());
    write_problems(dir / "problems.jsonl", coin_problems(problem_count));
    write_config(base());
  }

  nlohmann::json base() const {
    return {{"teacher", {{"kind", "toy"}, {"toy_spec", "teacher.toy"}}},
            {"student", {{"kind", "toy"}, {"toy_spec", "student.toy"}, {"cold_started", true}}},
            {"generation", {{"chunk_size", 4}, {"max_generation_tokens", 16}}},
            {"seed", 3},
            {"cold_start", {{"attempts_per_problem", 2}, {"target_count", 4}}},
            {"paths", {{"problems", "problems.jsonl"}}}};
  }

  void write_config(const nlohmann::json& j) const { write_text(config, j.dump(2)); }

  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit 2 and --version exits 0") {
  CHECK(cli({"--version"}).code == kExitOk);
  CHECK(cli({"--version"}).out.find("chunksel ") == 0);
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"distill", "--bogus"}).code == kExitUsage);
  CHECK(cli({"baseline", "nonsense"}).code == kExitUsage);
  CHECK(cli({"distill", "--out", "/tmp/x"}).code == kExitUsage);  // no config
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("dry run prints the resolved config and touches nothing") {
  Workspace ws;
  auto r = cli({"--config", ws.config.string(), "--dry-run", "distill", "--out", ws.path("run"), "--chunk-size", "8",
                "--strategy", "random", "--strategy-seed", "77", "--schedule", "head=4;tail=2"});
  REQUIRE(r.code == kExitOk);
  auto j = nlohmann::json::parse(r.out);
  CHECK(j["mode"] == "ssd");
  CHECK(j["generation"]["chunk_size"] == 8);
  CHECK(j["strategy"]["kind"] == "random");
  CHECK(j["strategy"]["seed"] == 77);
  CHECK(j["schedule"]["head"] == nlohmann::json::array({4}));
  CHECK(j["teacher"]["toy_spec"] == ws.path("teacher.toy"));
  CHECK_FALSE(j["teacher"]["toy_fingerprint"].is_null());
  CHECK_FALSE(fs::exists(ws.dir / "run"));
}

TEST_CASE("invalid settings are rejected before any work") {
  Workspace ws;
  auto r = cli({"--config", ws.config.string(), "distill", "--out", ws.path("run"), "--chunk-size", "32"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("chunk") != std::string::npos);
  CHECK_FALSE(fs::exists(ws.dir / "run"));

  auto cfg = ws.base();
  cfg["generation"]["temprature"] = 0.5;
  ws.write_config(cfg);
  r = cli({"--config", ws.config.string(), "distill", "--out", ws.path("run")});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("temprature") != std::string::npos);

  cfg = ws.base();
  cfg["student"]["cold_started"] = false;
  ws.write_config(cfg);
  r = cli({"--config", ws.config.string(), "distill", "--out", ws.path("run")});
  CHECK(r.code == kExitUsage);
}

TEST_CASE("cold start writes a verified dataset and distillation holds it out") {
  ToyModelSpec student = fixed_answer_teacher(true);
  student.name = "w-student";
  student.transition_weights = {{{}, {3, 1, 1, 1}}};
  Workspace ws(fixed_answer_teacher(true), 12, student);
  auto probs = coin_problems(12);
  for (auto& p : probs) p.gold_answer = "1";
  write_problems(ws.dir / "problems.jsonl", probs);

  auto r = cli({"--config", ws.config.string(), "coldstart", "--out", ws.path("init")});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  auto records = read_dataset(ws.dir / "init" / RunStore::kDatasetFile);
  REQUIRE(records.size() == 4);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].problem_id == probs[i].problem_id);
    CHECK(records[i].mode == DataMode::ColdStart);
    CHECK(records[i].correct);
    CHECK(records[i].trajectory_text.find("\\boxed{1}") != std::string::npos);
  }
  auto sft = read_text(ws.dir / "init" / RunStore::kSftFile);
  CHECK(std::count(sft.begin(), sft.end(), '\n') == 4);
  auto first = nlohmann::json::parse(sft.substr(0, sft.find('\n')));
  CHECK(first["prompt"] == probs[0].prompt);
  CHECK(first["completion"].get<std::string>().find("<think>") == 0);
  CHECK(read_text(ws.dir / "init" / RunStore::kConfigFile).find("\"mode\": \"cold_start\"") != std::string::npos);

  r = cli({"--config", ws.config.string(), "distill", "--out", ws.path("ssd"), "--exclude-run", ws.path("init")});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  auto m = RunStore::load_manifest(ws.dir / "ssd");
  CHECK(m.problems.size() == 8);
  for (const auto& e : m.problems) {
    for (const auto& rec : records) CHECK(e.problem_id != rec.problem_id);
  }
}

TEST_CASE("a cold start that keeps nothing exits 4") {
  Workspace ws(fixed_answer_teacher(false));
  auto probs = coin_problems(3);
  for (auto& p : probs) p.gold_answer = "1";
  write_problems(ws.dir / "problems.jsonl", probs);
  auto r = cli({"--config", ws.config.string(), "coldstart", "--out", ws.path("init")});
  CHECK(r.code == kExitPartial);
  CHECK(r.err.find("kept no records") != std::string::npos);
  CHECK(read_text(ws.dir / "init" / RunStore::kDatasetFile).empty());
}

TEST_CASE("strategies are recorded and random selection is reproducible") {
  Workspace ws;
  for (const char* s : {"low", "high"}) {
    auto r = cli({"--config", ws.config.string(), "distill", "--out", ws.path(s), "--strategy", s});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    for (const auto& rec : read_dataset(ws.dir / s / RunStore::kDatasetFile)) {
      CHECK(std::string(to_string(rec.strategy)) == s);
    }
  }
  for (const char* d : {"rand-a", "rand-b"}) {
    auto r = cli({"--config", ws.config.string(), "--workers", "3", "distill", "--out", ws.path(d), "--strategy",
                  "random", "--strategy-seed", "5"});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  }
  CHECK(read_text(ws.dir / "rand-a" / RunStore::kDatasetFile) ==
        read_text(ws.dir / "rand-b" / RunStore::kDatasetFile));
}

TEST_CASE("an interrupted run resumes to the same files") {
  Workspace ws(coin_teacher(), 16);
  auto r = cli({"--config", ws.config.string(), "distill", "--out", ws.path("full")});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);

  r = cli({"--config", ws.config.string(), "--stop-after", "5", "distill", "--out", ws.path("part")});
  CHECK(r.code == kExitInterrupted);
  CHECK(r.err.find("--resume") != std::string::npos);
  CHECK(RunStore::load_manifest(ws.dir / "part").counters().pending > 0);

  r = cli({"--config", ws.config.string(), "distill", "--out", ws.path("part")});
  CHECK(r.code == kExitUsage);  // refuses to overwrite an existing run

  r = cli({"--resume", ws.path("part"), "distill", "--chunk-size", "8"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("generation.chunk_size: 4 -> 8") != std::string::npos);

  r = cli({"--resume", ws.path("part"), "--workers", "4", "distill"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  for (const char* f : {RunStore::kDatasetFile, RunStore::kSftFile}) {
    CHECK_MESSAGE(read_text(ws.dir / "full" / f) == read_text(ws.dir / "part" / f), f);
  }
}

TEST_CASE("baselines run without the backends they do not need") {
  Workspace ws;
  auto cfg = ws.base();
  cfg["teacher"] = nullptr;
  ws.write_config(cfg);
  auto r = cli({"--config", ws.config.string(), "baseline", "self-distill", "--out", ws.path("sd"), "--samples", "2"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  for (const auto& rec : read_dataset(ws.dir / "sd" / RunStore::kDatasetFile)) {
    CHECK(rec.mode == DataMode::SelfDistill);
  }
  r = cli({"--config", ws.config.string(), "baseline", "standard-kd", "--out", ws.path("kd")});
  CHECK(r.code == kExitUsage);  // standard KD needs a teacher

  write_text(ws.dir / "pools.jsonl",
             "{\"problem_id\":\"p0000\",\"solutions\":[\"x \\\\boxed{1}$\",\"\\\\boxed{2}$\"]}\n"
             "{\"problem_id\":\"p0001\",\"solutions\":[\"\\\\boxed{2}$\"]}\n");
  r = cli({"--config", ws.config.string(), "baseline", "pool-select", "--out", ws.path("pool"), "--pools",
           ws.path("pools.jsonl")});
  CHECK(r.code == kExitPartial);  // ten problems have no pool
  auto m = RunStore::load_manifest(ws.dir / "pool");
  CHECK(m.counters().failed == 10);
  CHECK(m.counters().kept + m.counters().filtered == 2);
}

TEST_CASE("unreachable or incapable backends exit 3") {
  Workspace ws;
  auto cfg = ws.base();
  cfg["teacher"] = {{"kind", "remote"},
                    {"base_url", "http://127.0.0.1:1/v1"},
                    {"model", "gone"},
                    {"timeout_ms", 500},
                    {"retry", {{"max_attempts", 1}}}};
  ws.write_config(cfg);
  auto r = cli({"--config", ws.config.string(), "distill", "--out", ws.path("run")});
  CHECK(r.code == kExitStartup);

  cfg = ws.base();
  cfg["student"]["capabilities"] = {{"can_score", false}};
  ws.write_config(cfg);
  r = cli({"--config", ws.config.string(), "distill", "--out", ws.path("run2")});
  CHECK(r.code == kExitStartup);
}

TEST_CASE("auth tokens never reach the config snapshot") {
  Workspace ws;
  ::setenv("CHUNKSEL_CLI_TOKEN", "tok-abc123", 1);
  auto cfg = ws.base();
  cfg["teacher"] = {{"kind", "remote"}, {"base_url", "http://127.0.0.1:9/v1"}, {"model", "m"},
                    {"auth_token_env", "CHUNKSEL_CLI_TOKEN"}};
  ws.write_config(cfg);
  auto r = cli({"--config", ws.config.string(), "--dry-run", "distill", "--out", ws.path("run")});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("tok-abc123") == std::string::npos);
  CHECK(r.out.find("CHUNKSEL_CLI_TOKEN") != std::string::npos);

  cfg["teacher"]["auth_token"] = "tok-abc123";
  ws.write_config(cfg);
  r = cli({"--config", ws.config.string(), "--dry-run", "distill", "--out", ws.path("run")});
  CHECK(r.code == kExitUsage);
}

TEST_CASE("stats reports over run directories") {
  Workspace ws;
  REQUIRE(cli({"--config", ws.config.string(), "distill", "--out", ws.path("a")}).code == kExitOk);
  REQUIRE(cli({"--config", ws.config.string(), "baseline", "standard-kd", "--out", ws.path("b"), "--samples", "3"})
              .code == kExitOk);

  auto r = cli({"stats", ws.path("a"), ws.path("nope"), ws.path("nope2"), "--out", ws.path("rep")});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("nope") != std::string::npos);
  CHECK(r.err.find("nope2") != std::string::npos);

  r = cli({"stats", ws.path("a"), "--out", ws.path("a")});
  CHECK(r.code == kExitUsage);

  r = cli({"stats", ws.path("a"), ws.path("b"), "--trace", "--trace-chunk", "4", "--cost", "--out", ws.path("rep")});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto stats = read_text(ws.dir / "rep" / "stats.tsv");
  CHECK(std::count(stats.begin(), stats.end(), '\n') == 3);
  const auto trace = read_text(ws.dir / "rep" / "trace.tsv");
  CHECK(trace.find("run_id\tproblem_id\twindow") == 0);
  const auto cost = read_text(ws.dir / "rep" / "cost.tsv");
  CHECK(std::count(cost.begin(), cost.end(), '\n') == 3);
  auto summary = nlohmann::json::parse(read_text(ws.dir / "rep" / "summary.json"));
  CHECK(summary["runs"].size() == 2);
  CHECK(summary["cost"]["ratios"].size() == 2);
  for (const auto& [id, run] : summary["runs"].items()) {
    if (run["mode"] == "ssd") CHECK(run["stats"]["max_ppl_divergence"].get<double>() < 1e-12);
  }
  // Nothing is written into the run directories themselves.
  CHECK_FALSE(fs::exists(ws.dir / "a" / "stats.tsv"));
}

TEST_CASE("the installed binary maps exit codes") {
  Workspace ws;
  auto run = [](const std::string& cmd) {
    int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  const std::string bin = CHUNKSEL_CLI_PATH;
  CHECK(run(bin + " --version") == kExitOk);
  CHECK(run(bin + " distill") == kExitUsage);
  CHECK(run(bin + " --config " + ws.config.string() + " distill --out " + ws.path("run")) == kExitOk);
  CHECK(fs::exists(ws.dir / "run" / RunStore::kDatasetFile));
}
