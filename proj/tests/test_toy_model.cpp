#include <doctest.h>

#include <cmath>

#include "chunksel/errors.hpp"
#include "chunksel/toy_model.hpp"
#include "fixtures.hpp"

using namespace chunksel;
using namespace chunksel::testing;

namespace {

SampleRequest request(const std::string& context, int n, int budget, int first = 0) {
  SampleRequest r;
  r.problem_id = "p";
  r.step = 1;
  r.first_candidate_index = first;
  r.run_seed = 1;
  r.context = context;
  r.n = n;
  r.token_budget = budget;
  return r;
}

}  // namespace

TEST_CASE("toy model file parses, validates and round-trips") {
  const std::string text =
      "# two-symbol model\n"
      "name = demo\n"
      "order = 2\n"
      "seed = 17\n"
      "vocab = a b \\s $\n"
      "end = $\n"
      "row : 4 2 1 1   # empty context\n"
      "row a : 1 3 1 0.5\n"
      "row \\s : 1 1 0 2\n";
  auto spec = ToyModelSpec::parse(text);
  CHECK(spec.name == "demo");
  CHECK(spec.order == 2);
  CHECK(spec.seed == 17);
  CHECK(spec.vocabulary == std::vector<std::string>{"a", "b", " ", "$"});
  CHECK(spec.transition_weights.at({" "}) == std::vector<double>{1, 1, 0, 2});
  auto again = ToyModelSpec::parse(spec.serialize());
  CHECK(again.vocabulary == spec.vocabulary);
  CHECK(again.transition_weights == spec.transition_weights);
  CHECK(again.end_symbol == spec.end_symbol);
}

TEST_CASE("toy model validation rejects malformed tables") {
  auto base = uniform_model();
  auto bad = base;
  bad.transition_weights.clear();
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = base;
  bad.transition_weights[{}] = {1, -1, 1, 1};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = base;
  bad.transition_weights[{}] = {0, 0, 0, 0};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = base;
  bad.transition_weights[{}] = {1, 1, 1};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = base;
  bad.end_symbol = "q";
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = base;
  bad.transition_weights[{"u"}] = {1, 1, 1, 1};  // order 1 allows only the empty context
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = base;
  bad.vocabulary = {"u", "uv", "w", "z"};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(ToyModelSpec::parse("order = 1\nvocab = a\nend = a\nrow : 1 2\n"), ValidationError);
}

TEST_CASE("normalized rows sum to one") {
  ToyBackend m(selection_teacher());
  for (const auto& [ctx, w] : m.spec().transition_weights) {
    std::vector<int> ids;
    for (const auto& c : ctx) ids.push_back(m.tokenize(c, false).front());
    double sum = 0.0;
    for (double p : m.distribution(ids)) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("score_text on hand-computable models") {
  ToyModelSpec ab;
  ab.order = 1;
  ab.vocabulary = {"a", "b"};
  ab.end_symbol = "b";
  ab.transition_weights = {{{}, {1, 1}}};
  ToyBackend uniform(ab);
  auto s = uniform.score_text("", "ab");
  REQUIRE(s.size() == 2);
  CHECK(s[0].logprob == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(s[1].logprob == doctest::Approx(-0.693147).epsilon(1e-6));
  CHECK(s[0].token_text + s[1].token_text == "ab");

  ab.transition_weights = {{{}, {0.8, 0.2}}};
  ToyBackend skewed(ab);
  s = skewed.score_text("ignored context", "ab");
  CHECK(s[0].logprob == doctest::Approx(std::log(0.8)).epsilon(1e-15));
  CHECK(s[1].logprob == doctest::Approx(std::log(0.2)).epsilon(1e-15));

  CHECK_THROWS_AS(skewed.score_text("", ""), ValidationError);
  CHECK_THROWS_AS(skewed.score_text("", "abc"), ValidationError);
}

TEST_CASE("scoring backs off to shorter contexts and rejects impossible tokens") {
  ToyBackend m(quarter_student());
  CHECK(m.score_text("p", "x")[0].logprob == 0.0);
  CHECK(m.score_text("q", "x")[0].logprob == doctest::Approx(std::log(0.5)));
  CHECK(m.score_text("r", "x")[0].logprob == doctest::Approx(std::log(0.25)));
  CHECK(m.score_text("?", "x")[0].logprob == doctest::Approx(std::log(0.2)));  // unknown context: empty row
  CHECK_THROWS_AS(m.score_text("p", "y"), ValidationError);
}

TEST_CASE("sampling is deterministic per stream and honours the budget") {
  ToyBackend m(selection_teacher());
  auto a = m.sample_continuations(request("ctx", 3, 6));
  auto b = m.sample_continuations(request("ctx", 3, 6));
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].text == b[i].text);
    CHECK(a[i].teacher_token_count <= 6);
  }
  // Candidate streams depend on the index, not on how requests are batched.
  auto c = m.sample_continuations(request("ctx", 1, 6, 2));
  CHECK(c[0].text == a[2].text);

  for (auto& s : m.sample_continuations(request("ctx", 8, 1))) CHECK(s.teacher_token_count <= 1);
  CHECK(m.sample_calls() == 4);
  CHECK_THROWS_AS(m.sample_continuations(request("ctx", 0, 3)), ValidationError);
}

TEST_CASE("finished is set by the end symbol or a stop marker") {
  ToyBackend m(fixed_answer_teacher(true));
  auto r = request("", 4, 50);
  for (const auto& s : m.sample_continuations(r)) {
    CHECK(s.finished);
    CHECK(s.text.substr(s.text.size() - 1) == "$");
  }
  r.params.stop_markers = {"\\boxed{1}"};
  for (const auto& s : m.sample_continuations(r)) {
    CHECK(s.finished);
    CHECK(s.text.find('$') == std::string::npos);
  }
  auto cut = m.sample_continuations(request("", 4, 1));
  for (const auto& s : cut) {
    if (s.text == "w") CHECK_FALSE(s.finished);
  }
}

TEST_CASE("sampling probabilities match scoring") {
  ToyBackend t(selection_teacher());
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const std::string context = seed % 2 ? "Q: " : "b";
    auto trace = t.sample_one(context, seed, 12, {});
    double product = 1.0;
    for (double p : trace.step_probabilities) product *= p;
    double sum = 0.0;
    for (const auto& s : t.score_text(context, trace.sample.text)) sum += s.logprob;
    CHECK(std::abs(std::exp(sum) - product) <= 1e-9 * product);
  }
}

TEST_CASE("capabilities gate calls") {
  ToyBackend m(uniform_model(), {false, false, true});
  CHECK_THROWS_AS(m.sample_continuations(request("", 1, 1)), CapabilityError);
  CHECK_THROWS_AS(m.score_text("", "u"), CapabilityError);
  CHECK(m.identity() == "toy:uniform");
}
