#include <doctest.h>

#include <numeric>
#include <random>

#include "chunksel/answer.hpp"

using namespace chunksel;

TEST_CASE("extract_answer takes the last boxed marker") {
  auto a = extract_answer("Total students: \\(15 + 12 = 27\\) so the final answer is \\boxed{27}");
  CHECK(a.found);
  CHECK(a.raw == "27");
  CHECK(a.extraction_rule == ExtractionRule::BoxedMarker);

  CHECK(extract_answer("first \\boxed{3} then \\boxed{27}").raw == "27");
  CHECK(extract_answer("\\boxed{\\frac{1}{2}}").raw == "\\frac{1}{2}");
  CHECK(extract_answer("\\boxed{27} trailing \\boxed{").raw == "27");   // unterminated marker skipped
  CHECK(extract_answer("\\boxed{27} then \\boxed{ }").raw == "27");     // empty marker skipped
}

TEST_CASE("extract_answer falls back to the last line after the reasoning block") {
  auto a = extract_answer("<think>\nwork\n</think>\nThe answer:\n  42  \n\n");
  CHECK(a.found);
  CHECK(a.raw == "42");
  CHECK(a.extraction_rule == ExtractionRule::FinalLine);
  CHECK_FALSE(extract_answer("no markers at all\n42").found);
}

TEST_CASE("extract_answer on empty text finds nothing") {
  auto a = extract_answer("");
  CHECK_FALSE(a.found);
  CHECK(a.raw.empty());
  CHECK(a.normalized.empty());
  CHECK(a.extraction_rule == ExtractionRule::None);
}

TEST_CASE("answers_match fixtures") {
  auto found = [](const std::string& s) { return extract_answer("\\boxed{" + s + "}"); };
  CHECK(answers_match(found("27"), "27"));
  CHECK(answers_match(found("0027"), "27"));
  CHECK(answers_match(found("6/8"), "3/4"));
  CHECK(answers_match(found("\\frac{6}{8}"), "3/4"));
  CHECK(answers_match(found("27.0"), "27"));
  CHECK(answers_match(found("-0"), "0"));
  CHECK(answers_match(found(" x  + y "), "x + y"));
  CHECK_FALSE(answers_match(found("X"), "x"));
  CHECK_FALSE(answers_match(found("28"), "27"));
  CHECK_FALSE(answers_match(ExtractedAnswer{}, "27"));
  CHECK_FALSE(answers_match(ExtractedAnswer{}, ""));
  CHECK_FALSE(answers_match(found("27"), ""));
}

TEST_CASE("normalization strips delimiters and canonicalizes numbers") {
  CHECK(normalize_answer("$27$") == "27");
  CHECK(normalize_answer("\\(27\\)") == "27");
  CHECK(normalize_answer("\\boxed{27}") == "27");
  CHECK(normalize_answer("{{27}}") == "27");
  CHECK(normalize_answer("+003.500") == "3.5");
  CHECK(normalize_answer("-4/-6") == "2/3");
  CHECK(normalize_answer("4/-6") == "-2/3");
  CHECK(normalize_answer("10/5") == "2");
  CHECK(normalize_answer("3/0") == "3/0");
}

TEST_CASE("fraction reduction agrees with a gcd oracle") {
  std::mt19937 rng(17);
  for (int i = 0; i < 500; ++i) {
    long a = static_cast<long>(rng() % 1000), b = 1 + static_cast<long>(rng() % 999);
    long g = std::gcd(a, b);
    std::string expected = b / g == 1 ? std::to_string(a / g) : std::to_string(a / g) + "/" + std::to_string(b / g);
    CHECK(normalize_answer(std::to_string(a) + "/" + std::to_string(b)) == expected);
  }
}

TEST_CASE("normalization is idempotent and matching is reflexive and symmetric") {
  const std::vector<std::string> samples{"27", "0027", " 6/8 ", "$\\frac{2}{4}$", "-0.50", "a  b", "\\boxed{x}",
                                         "{3}", "1e5", "007.", "-", "\\dfrac{9}{3}"};
  for (const auto& s : samples) {
    CHECK(normalize_answer(normalize_answer(s)) == normalize_answer(s));
    auto e = extract_answer("\\boxed{" + s + "}");
    if (!e.found) continue;
    CHECK(answers_match(e, e.raw));
    for (const auto& t : samples) {
      auto f = extract_answer("\\boxed{" + t + "}");
      if (!f.found) continue;
      CHECK(answers_match(e, f.raw) == answers_match(f, e.raw));
    }
  }
}
