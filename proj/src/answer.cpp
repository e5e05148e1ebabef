#include "chunksel/answer.hpp"

#include <cctype>
#include <charconv>
#include <numeric>
#include <optional>
#include <regex>

namespace chunksel {
namespace {

bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Position of the brace closing the one at `open`, or npos.
std::size_t matching_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '{') {
      ++depth;
    } else if (s[i] == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }
bool ends_with(std::string_view s, std::string_view p) {
  return s.size() >= p.size() && s.substr(s.size() - p.size()) == p;
}

// Removes one layer of enclosing delimiters, if any.
std::optional<std::string_view> strip_enclosing(std::string_view s) {
  if (s.size() >= 4 && starts_with(s, "$$") && ends_with(s, "$$")) return s.substr(2, s.size() - 4);
  if (s.size() >= 2 && s.front() == '$' && s.back() == '$') return s.substr(1, s.size() - 2);
  if (s.size() >= 4 && starts_with(s, "\\(") && ends_with(s, "\\)")) return s.substr(2, s.size() - 4);
  if (s.size() >= 4 && starts_with(s, "\\[") && ends_with(s, "\\]")) return s.substr(2, s.size() - 4);
  for (std::string_view wrapper : {std::string_view("\\boxed{"), std::string_view("{")}) {
    if (starts_with(s, wrapper) && s.back() == '}') {
      std::size_t open = wrapper.size() - 1;
      if (matching_brace(s, open) == s.size() - 1) return s.substr(wrapper.size(), s.size() - wrapper.size() - 1);
    }
  }
  return std::nullopt;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string canonical_decimal(const std::smatch& m) {
  std::string sign = m[1].str();
  std::string int_part = m[2].str();
  std::string frac_part = m[3].matched ? m[3].str() : std::string();
  std::size_t nz = int_part.find_first_not_of('0');
  int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();
  std::string out = int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  if (sign == "-" && out != "0") out = "-" + out;
  return out;
}

std::optional<long long> parse_int(const std::string& s) {
  std::string_view v = s;
  if (!v.empty() && v.front() == '+') v.remove_prefix(1);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), value);
  if (ec != std::errc() || ptr != v.data() + v.size()) return std::nullopt;
  return value;
}

std::optional<std::string> canonical_fraction(const std::string& num_s, const std::string& den_s) {
  auto num = parse_int(num_s);
  auto den = parse_int(den_s);
  if (!num || !den) return std::nullopt;
  long long a = *num, b = *den;
  if (b == 0) return std::to_string(a) + "/0";
  if (b < 0) {
    a = -a;
    b = -b;
  }
  long long g = std::gcd(a, b);
  if (g > 1) {
    a /= g;
    b /= g;
  }
  if (b == 1) return std::to_string(a);
  return std::to_string(a) + "/" + std::to_string(b);
}

}  // namespace

bool Problem::unverifiable() const {
  auto it = metadata.find("unverifiable");
  return it != metadata.end() && it->second == "true";
}

ExtractedAnswer extract_answer(std::string_view text) {
  ExtractedAnswer out;
  static constexpr std::string_view kBoxed = "\\boxed{";
  std::size_t search_end = text.size();
  while (search_end > 0) {
    std::size_t pos = text.rfind(kBoxed, search_end - 1);
    if (pos == std::string_view::npos) break;
    std::size_t open = pos + kBoxed.size() - 1;
    std::size_t close = matching_brace(text, open);
    if (close != std::string_view::npos) {
      std::string_view inner = trim(text.substr(open + 1, close - open - 1));
      if (!inner.empty()) {
        out.raw = std::string(inner);
        out.normalized = normalize_answer(inner);
        out.found = true;
        out.extraction_rule = ExtractionRule::BoxedMarker;
        return out;
      }
    }
    search_end = pos;
  }

  std::size_t think = text.rfind(kThinkClose);
  if (think == std::string_view::npos) return out;
  std::string_view tail = text.substr(think + kThinkClose.size());
  while (!tail.empty()) {
    std::size_t nl = tail.find_last_of('\n');
    std::string_view line = nl == std::string_view::npos ? tail : tail.substr(nl + 1);
    line = trim(line);
    if (!line.empty()) {
      out.raw = std::string(line);
      out.normalized = normalize_answer(line);
      out.found = true;
      out.extraction_rule = ExtractionRule::FinalLine;
      return out;
    }
    if (nl == std::string_view::npos) break;
    tail = tail.substr(0, nl);
  }
  return out;
}

std::string normalize_answer(std::string_view answer) {
  std::string_view s = trim(answer);
  while (auto inner = strip_enclosing(s)) {
    s = trim(*inner);
  }
  std::string collapsed = collapse_whitespace(s);

  static const std::regex kDecimal(R"(^([+-]?)(\d+)(?:\.(\d+))?$)");
  static const std::regex kSlash(R"(^([+-]?\d+) ?/ ?([+-]?\d+)$)");
  static const std::regex kFrac(R"(^(-?)\\[dt]?frac\{ ?([+-]?\d+) ?\}\{ ?([+-]?\d+) ?\}$)");

  std::smatch m;
  if (std::regex_match(collapsed, m, kDecimal)) return canonical_decimal(m);
  if (std::regex_match(collapsed, m, kSlash)) {
    if (auto f = canonical_fraction(m[1].str(), m[2].str())) return *f;
  }
  if (std::regex_match(collapsed, m, kFrac)) {
    std::string num = m[2].str();
    if (m[1].str() == "-") num = (num.front() == '-') ? num.substr(1) : "-" + num;
    if (auto f = canonical_fraction(num, m[3].str())) return *f;
  }
  return collapsed;
}

bool answers_match(const ExtractedAnswer& extracted, std::string_view gold) {
  if (!extracted.found) return false;
  std::string g = normalize_answer(gold);
  if (g.empty()) return false;
  return normalize_answer(extracted.raw) == g;
}

const char* to_string(ExtractionRule rule) {
  switch (rule) {
    case ExtractionRule::BoxedMarker: return "boxed";
    case ExtractionRule::FinalLine: return "final_line";
    case ExtractionRule::None: return "none";
  }
  return "none";
}

}  // namespace chunksel
