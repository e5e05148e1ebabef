#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "chunksel/errors.hpp"
#include "chunksel/metrics.hpp"
#include "chunksel/toy_model.hpp"
#include "fixtures.hpp"

using namespace chunksel;
using namespace chunksel::testing;

namespace {

DatasetRecord record(const std::string& id, const std::string& prompt, const std::string& text) {
  DatasetRecord r;
  r.problem_id = id;
  r.prompt = prompt;
  r.trajectory_text = text;
  r.correct = true;
  return r;
}

ProblemEntry entry(const std::string& id, std::int64_t candidates, std::int64_t sampled, bool kept = true) {
  ProblemEntry e;
  e.problem_id = id;
  e.status = ProblemStatus::Done;
  e.outcome = kept ? Outcome::Kept : Outcome::Filtered;
  e.candidates = candidates;
  e.tokens_sampled = sampled;
  e.tokens_selected = kept ? sampled / 4 : 0;
  return e;
}

}  // namespace

TEST_CASE("mean PPL of three hand-computed records") {
  ToyBackend student(quarter_student());
  std::vector<DatasetRecord> records{record("a", "p", "x"), record("b", "q", "x"), record("c", "r", "x")};
  records[1].trajectory_ppl = 2.0;
  records[1].teacher_token_count = 6;
  auto s = dataset_stats(records, student, 5);
  CHECK(s.record_count == 3);
  CHECK(s.attempted == 5);
  CHECK(s.keep_rate == doctest::Approx(0.6));
  REQUIRE(s.means_defined);
  CHECK(std::abs(s.mean_ppl - 7.0 / 3.0) < 1e-12);
  CHECK(s.rescored_ppl == std::vector<double>{1.0, 2.0, 4.0});
  CHECK(s.mean_student_tokens == 1.0);
  CHECK(s.mean_teacher_tokens == 2.0);
  CHECK(s.stored_ppl_count == 1);
  CHECK(s.max_ppl_divergence < 1e-12);
}

TEST_CASE("single record and empty dataset") {
  ToyBackend student(quarter_student());
  auto one = dataset_stats({record("a", "r", "x")}, student);
  CHECK(one.mean_ppl == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(one.keep_rate == 1.0);

  auto none = dataset_stats({}, student, 10);
  CHECK(none.record_count == 0);
  CHECK_FALSE(none.means_defined);
  CHECK(none.keep_rate == 0.0);
  auto tsv = stats_tsv("empty", none);
  CHECK(tsv.find("\tNA\t") != std::string::npos);
  CHECK(none.to_json()["mean_ppl"].is_null());
  auto nothing = dataset_stats({}, student, 0);
  CHECK(nothing.keep_rate == 0.0);
}

TEST_CASE("a stale stored PPL shows up as divergence") {
  ToyBackend student(quarter_student());
  auto r = record("a", "q", "x");
  r.trajectory_ppl = 3.0;
  auto s = dataset_stats({r}, student);
  CHECK(s.max_ppl_divergence == doctest::Approx(0.5));
}

TEST_CASE("trace windows split the trajectory by student tokens") {
  ToyBackend uniform(uniform_model());
  auto r = record("u", "Q", std::string(512, 'u'));
  auto t = chunk_trace(r, uniform, 256);
  CHECK(t.token_count() == 512);
  REQUIRE(t.per_chunk_ppl.size() == 2);
  CHECK(t.window_tokens == std::vector<std::int64_t>{256, 256});
  for (double p : t.per_chunk_ppl) CHECK(p == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(t.trajectory_ppl == doctest::Approx(4.0).epsilon(1e-12));

  auto ragged = chunk_trace(record("u", "Q", std::string(300, 'v')), uniform, 256);
  CHECK(ragged.window_tokens == std::vector<std::int64_t>{256, 44});
  auto short_one = chunk_trace(record("u", "Q", "uvw"), uniform, 256);
  CHECK(short_one.window_tokens == std::vector<std::int64_t>{3});
  CHECK_THROWS_AS(chunk_trace(r, uniform, 0), ValidationError);
}

TEST_CASE("a single unlikely token spikes only its window") {
  ToyBackend spike(spike_model());
  auto t = chunk_trace(record("s", "Q", "mmsm"), spike, 1);
  REQUIRE(t.per_chunk_ppl.size() == 4);
  CHECK(t.per_chunk_ppl[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(t.per_chunk_ppl[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(t.per_chunk_ppl[2] == doctest::Approx(1024.0).epsilon(1e-12));
  CHECK(t.per_chunk_ppl[3] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(t.trajectory_ppl == doctest::Approx(std::pow(2.0, 13.0 / 4.0)).epsilon(1e-12));

  auto wide = chunk_trace(record("s", "Q", std::string(256, 'm') + "s" + std::string(255, 'm')), spike, 256);
  REQUIRE(wide.per_chunk_ppl.size() == 2);
  CHECK(wide.per_chunk_ppl[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(wide.per_chunk_ppl[1] == doctest::Approx(std::pow(2.0, 265.0 / 256.0)).epsilon(1e-12));
}

TEST_CASE("window NLLs add up to the trajectory PPL") {
  ToyBackend student(selection_student());
  ToyBackend teacher(selection_teacher(4));
  for (int i = 0; i < 20; ++i) {
    SampleRequest req;
    req.problem_id = "c" + std::to_string(i);
    req.context = "Q: ";
    req.token_budget = 200;
    auto s = teacher.sample_continuations(req)[0];
    auto t = chunk_trace(record(req.problem_id, "Q: ", s.text), student, 7);
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::size_t w = 0; w < t.window_tokens.size(); ++w) {
      sum += t.window_sum_nll[w];
      n += t.window_tokens[w];
      CHECK(t.per_chunk_ppl[w] == doctest::Approx(std::exp(t.window_sum_nll[w] / t.window_tokens[w])));
    }
    CHECK(n == t.token_count());
    CHECK(std::exp(sum / n) == doctest::Approx(t.trajectory_ppl).epsilon(1e-12));
  }
}

TEST_CASE("stored PPLs from a pipeline run match a fresh scoring pass") {
  ToyBackend teacher(coin_teacher());
  ToyBackend student(coin_student());
  GenerationParams g;
  g.chunk_size = 4;
  g.max_generation_tokens = 16;
  auto result =
      build_ssd_dataset(coin_problems(30), teacher, student, g, SamplingSchedule(), SelectionStrategy{}, 2);
  REQUIRE_FALSE(result.records.empty());
  auto s = dataset_stats(result.records, student, result.manifest.counters().attempted());
  CHECK(s.stored_ppl_count == static_cast<std::int64_t>(result.records.size()));
  CHECK(s.max_ppl_divergence < 1e-12);
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    CHECK(s.rescored_tokens[i] == result.records[i].student_token_count);
  }
  CHECK(s.keep_rate == doctest::Approx(static_cast<double>(result.records.size()) / 30.0));
}

TEST_CASE("cost report compares complete runs") {
  RunManifest ssd;
  ssd.run_id = "ssd-1";
  ssd.mode = DataMode::SSD;
  ssd.config = {{"schedule", {{"head", {16, 8}}, {"tail", 4}}}};
  ssd.problems = {entry("a", 28, 280), entry("b", 20, 120, false)};
  RunManifest kd;
  kd.run_id = "kd-1";
  kd.mode = DataMode::StandardKD;
  kd.problems = {entry("a", 14, 140), entry("b", 14, 100)};
  RunManifest partial = kd;
  partial.run_id = "kd-partial";
  partial.problems[1].status = ProblemStatus::Pending;

  auto report = cost_report({ssd, kd, partial});
  REQUIRE(report.rows.size() == 2);
  REQUIRE(report.warnings.size() == 1);
  CHECK(report.warnings[0].find("kd-partial") != std::string::npos);
  CHECK(report.rows[0].candidates == 48);
  CHECK(report.rows[0].tokens_sampled == 400);
  CHECK(report.rows[0].schedule == "head=16,8;tail=4");
  CHECK(report.rows[1].candidates == 28);
  REQUIRE(report.ratios.size() == 2);
  CHECK(report.ratios[0].numerator == "ssd-1");
  CHECK(report.ratios[0].candidates == doctest::Approx(48.0 / 28.0));
  CHECK(report.ratios[0].tokens_sampled == doctest::Approx(400.0 / 240.0));
  CHECK(report.ratios[1].candidates == doctest::Approx(28.0 / 48.0));

  auto tsv = cost_tsv(report);
  CHECK(tsv.substr(0, tsv.find('\n')).find("run_id") == 0);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 3);
  auto ratios = ratio_tsv(report);
  CHECK(std::count(ratios.begin(), ratios.end(), '\n') == 3);
  CHECK(report.to_json()["runs"].size() == 2);
}
