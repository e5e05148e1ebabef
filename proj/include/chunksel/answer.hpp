#pragma once

#include <map>
#include <string>
#include <string_view>

namespace chunksel {

struct Problem {
  std::string problem_id;
  std::string prompt;
  std::string gold_answer;
  std::map<std::string, std::string> metadata;

  // Gold is absent (metadata "unverifiable" = "true"); such problems are never
  // accepted by rejection filtering.
  bool unverifiable() const;
};

enum class ExtractionRule { BoxedMarker, FinalLine, None };

struct ExtractedAnswer {
  std::string raw;
  std::string normalized;
  bool found = false;
  ExtractionRule extraction_rule = ExtractionRule::None;
};

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";

/// Pulls the committed answer out of a reasoning trace.
///
/// The last \boxed{...} (braces matched, nesting allowed) wins. Without one,
/// the last nonempty line after the final </think> is used. Otherwise
/// found = false.
ExtractedAnswer extract_answer(std::string_view trajectory_text);

/// Canonical form used for comparison: trims, strips enclosing math
/// delimiters ($..$, $$..$$, \(..\), \[..\], \boxed{..}), canonicalizes plain
/// integers/decimals (sign, leading zeros, trailing fractional zeros) and
/// reduces integer fractions a/b or \frac{a}{b} by their gcd. Anything else
/// is whitespace-collapsed and compared case-sensitively. Idempotent.
std::string normalize_answer(std::string_view answer);

bool answers_match(const ExtractedAnswer& extracted, std::string_view gold);

const char* to_string(ExtractionRule rule);

}  // namespace chunksel
