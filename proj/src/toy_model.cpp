#include "chunksel/toy_model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "chunksel/errors.hpp"
#include "chunksel/rng.hpp"

namespace chunksel {
namespace {

std::string unescape(std::string_view raw) {
  std::string out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != '\\' || i + 1 == raw.size()) {
      out.push_back(raw[i]);
      continue;
    }
    char next = raw[i + 1];
    switch (next) {
      case 's': out.push_back(' '); ++i; break;
      case 'n': out.push_back('\n'); ++i; break;
      case 't': out.push_back('\t'); ++i; break;
      case '\\': out.push_back('\\'); ++i; break;
      default: out.push_back('\\'); break;
    }
  }
  return out;
}

std::string escape(std::string_view sym) {
  std::string out;
  for (char c : sym) {
    switch (c) {
      case ' ': out += "\\s"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream is{std::string(s)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view strip_comment(std::string_view line) {
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '#' && (i == 0 || std::isspace(static_cast<unsigned char>(line[i - 1])))) {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

ToyModelSpec ToyModelSpec::parse(std::string_view text) {
  ToyModelSpec spec;
  std::istringstream in{std::string(text)};
  std::string line_buf;
  int line_no = 0;
  bool saw_vocab = false;
  std::vector<std::pair<int, std::string>> rows;
  while (std::getline(in, line_buf)) {
    ++line_no;
    std::string_view line = trim(strip_comment(line_buf));
    if (line.empty()) continue;
    auto where = [&] { return "toy model line " + std::to_string(line_no) + ": "; };
    if (line.substr(0, 3) == "row" && (line.size() == 3 || std::isspace(static_cast<unsigned char>(line[3])))) {
      rows.emplace_back(line_no, std::string(line.substr(3)));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ValidationError(where() + "expected 'key = value' or 'row ctx : weights'");
    std::string key(trim(line.substr(0, eq)));
    std::string_view value = trim(line.substr(eq + 1));
    try {
      if (key == "name") {
        spec.name = std::string(value);
      } else if (key == "order") {
        spec.order = std::stoi(std::string(value));
      } else if (key == "seed") {
        spec.seed = std::stoull(std::string(value));
      } else if (key == "vocab") {
        for (const auto& s : split_ws(value)) spec.vocabulary.push_back(unescape(s));
        saw_vocab = true;
      } else if (key == "end") {
        spec.end_symbol = unescape(value);
      } else {
        throw ValidationError(where() + "unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ValidationError(where() + "bad value for '" + key + "'");
    }
  }
  if (!saw_vocab) throw ValidationError("toy model: missing vocab");

  for (const auto& [row_line, body] : rows) {
    auto where = "toy model line " + std::to_string(row_line) + ": ";
    auto colon = body.find(':');
    if (colon == std::string::npos) throw ValidationError(where + "row needs ':' between context and weights");
    std::vector<std::string> ctx;
    for (const auto& s : split_ws(std::string_view(body).substr(0, colon))) ctx.push_back(unescape(s));
    std::vector<double> weights;
    for (const auto& w : split_ws(std::string_view(body).substr(colon + 1))) {
      try {
        std::size_t used = 0;
        weights.push_back(std::stod(w, &used));
        if (used != w.size()) throw std::invalid_argument(w);
      } catch (const std::logic_error&) {
        throw ValidationError(where + "bad weight '" + w + "'");
      }
    }
    if (!spec.transition_weights.emplace(std::move(ctx), std::move(weights)).second) {
      throw ValidationError(where + "duplicate row");
    }
  }
  spec.validate();
  return spec;
}

ToyModelSpec ToyModelSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open toy model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ToyModelSpec::serialize() const {
  std::ostringstream os;
  os << "name = " << name << "\n";
  os << "order = " << order << "\n";
  os << "seed = " << seed << "\n";
  os << "vocab =";
  for (const auto& v : vocabulary) os << " " << escape(v);
  os << "\nend = " << escape(end_symbol) << "\n";
  os.precision(17);
  for (const auto& [ctx, weights] : transition_weights) {
    os << "row";
    for (const auto& c : ctx) os << " " << escape(c);
    os << " :";
    for (double w : weights) os << " " << w;
    os << "\n";
  }
  return os.str();
}

void ToyModelSpec::validate() const {
  if (order < 1) throw ValidationError("toy model: order must be >= 1");
  if (vocabulary.empty()) throw ValidationError("toy model: empty vocabulary");
  std::set<std::string> seen;
  for (const auto& v : vocabulary) {
    if (v.empty()) throw ValidationError("toy model: empty symbol");
    if (!seen.insert(v).second) throw ValidationError("toy model: duplicate symbol '" + v + "'");
  }
  // Prefix-free symbols make tokenization unique, so text sampled token by
  // token and then concatenated re-tokenizes to the same sequence.
  for (auto it = seen.begin(); it != seen.end(); ++it) {
    auto next = std::next(it);
    if (next != seen.end() && next->compare(0, it->size(), *it) == 0) {
      throw ValidationError("toy model: symbol '" + *it + "' is a prefix of '" + *next + "'");
    }
  }
  if (end_symbol.empty() || !seen.count(end_symbol)) {
    throw ValidationError("toy model: end symbol must be a vocabulary member");
  }
  if (!transition_weights.count({})) throw ValidationError("toy model: missing empty-context row");
  for (const auto& [ctx, weights] : transition_weights) {
    if (static_cast<int>(ctx.size()) > order - 1) {
      throw ValidationError("toy model: context longer than order - 1");
    }
    for (const auto& c : ctx) {
      if (!seen.count(c)) throw ValidationError("toy model: context symbol '" + c + "' not in vocabulary");
    }
    if (weights.size() != vocabulary.size()) {
      throw ValidationError("toy model: row has " + std::to_string(weights.size()) + " weights, vocabulary has " +
                            std::to_string(vocabulary.size()));
    }
    double sum = 0.0;
    for (double w : weights) {
      if (!std::isfinite(w) || w < 0.0) throw ValidationError("toy model: weights must be finite and >= 0");
      sum += w;
    }
    if (!(sum > 0.0)) throw ValidationError("toy model: row weights must have a positive sum");
  }
}

ToyBackend::ToyBackend(ToyModelSpec spec, Capabilities caps) : spec_(std::move(spec)), caps_(caps) {
  spec_.validate();
  std::map<std::string, int> ids;
  for (std::size_t i = 0; i < spec_.vocabulary.size(); ++i) {
    ids[spec_.vocabulary[i]] = static_cast<int>(i);
    max_symbol_len_ = std::max(max_symbol_len_, spec_.vocabulary[i].size());
  }
  end_id_ = ids.at(spec_.end_symbol);
  for (const auto& [ctx, weights] : spec_.transition_weights) {
    std::vector<int> key;
    for (const auto& c : ctx) key.push_back(ids.at(c));
    double sum = 0.0;
    for (double w : weights) sum += w;
    std::vector<double> p;
    p.reserve(weights.size());
    for (double w : weights) p.push_back(w / sum);
    probs_.emplace(std::move(key), std::move(p));
  }
}

std::string ToyBackend::identity() const { return "toy:" + spec_.name; }

std::vector<int> ToyBackend::tokenize(std::string_view text, bool lenient) const {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    int found = -1;
    std::size_t found_len = 0;
    for (std::size_t i = 0; i < spec_.vocabulary.size(); ++i) {
      const auto& sym = spec_.vocabulary[i];
      if (sym.size() > found_len && text.substr(pos, sym.size()) == sym) {
        found = static_cast<int>(i);
        found_len = sym.size();
      }
    }
    if (found < 0) {
      if (!lenient) {
        throw ValidationError("toy model '" + spec_.name + "': text outside vocabulary at byte " +
                              std::to_string(pos));
      }
      out.push_back(-1);
      ++pos;
      continue;
    }
    out.push_back(found);
    pos += found_len;
  }
  return out;
}

const std::vector<double>& ToyBackend::distribution(std::span<const int> history) const {
  std::size_t max_len = std::min<std::size_t>(static_cast<std::size_t>(spec_.order - 1), history.size());
  for (std::size_t len = max_len; len > 0; --len) {
    auto suffix = history.subspan(history.size() - len);
    bool known = true;
    for (int id : suffix) known = known && id >= 0;
    if (!known) continue;
    auto it = probs_.find(std::vector<int>(suffix.begin(), suffix.end()));
    if (it != probs_.end()) return it->second;
  }
  return probs_.at({});
}

std::vector<int> ToyBackend::history_of(std::string_view context) const {
  auto ids = tokenize(context, true);
  auto keep = static_cast<std::size_t>(spec_.order - 1);
  if (ids.size() > keep) ids.erase(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(keep));
  return ids;
}

std::uint64_t ToyBackend::stream_seed(const SampleRequest& request, int candidate) const {
  return mix_seed({spec_.seed, request.run_seed, stable_hash(request.problem_id),
                   static_cast<std::uint64_t>(request.step), static_cast<std::uint64_t>(candidate)});
}

ToyBackend::Trace ToyBackend::sample_one(std::string_view context, std::uint64_t seed, int token_budget,
                                         const std::vector<std::string>& stop_markers) const {
  Trace trace;
  SeededStream stream(seed);
  std::vector<int> history = history_of(context);
  const auto keep = static_cast<std::size_t>(spec_.order - 1);
  for (int t = 0; t < token_budget; ++t) {
    const auto& dist = distribution(history);
    double u = stream.uniform();
    double cum = 0.0;
    int pick = -1;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i] <= 0.0) continue;
      cum += dist[i];
      pick = static_cast<int>(i);
      if (u < cum) break;
    }
    trace.sample.text += spec_.vocabulary[static_cast<std::size_t>(pick)];
    trace.sample.teacher_token_count += 1;
    trace.step_probabilities.push_back(dist[static_cast<std::size_t>(pick)]);
    if (pick == end_id_) {
      trace.sample.finished = true;
      break;
    }
    bool stopped = false;
    for (const auto& marker : stop_markers) {
      const auto& text = trace.sample.text;
      if (!marker.empty() && text.size() >= marker.size() &&
          text.compare(text.size() - marker.size(), marker.size(), marker) == 0) {
        stopped = true;
      }
    }
    if (stopped) {
      trace.sample.finished = true;
      break;
    }
    if (keep > 0) {
      history.push_back(pick);
      if (history.size() > keep) history.erase(history.begin());
    }
  }
  return trace;
}

std::vector<SampledText> ToyBackend::sample_continuations(const SampleRequest& request) {
  if (!caps_.can_sample) throw CapabilityError(identity() + " cannot sample");
  if (request.n < 1) throw ValidationError("sample_continuations: n must be >= 1");
  if (request.token_budget < 1) throw ValidationError("sample_continuations: token_budget must be >= 1");
  sample_calls_.fetch_add(1);
  std::vector<SampledText> out;
  out.reserve(static_cast<std::size_t>(request.n));
  for (int i = 0; i < request.n; ++i) {
    out.push_back(sample_one(request.context, stream_seed(request, request.first_candidate_index + i),
                             request.token_budget, request.params.stop_markers)
                      .sample);
  }
  return out;
}

std::vector<TokenScore> ToyBackend::score_text(std::string_view context, std::string_view continuation) {
  if (!caps_.can_score) throw CapabilityError(identity() + " cannot score");
  if (continuation.empty()) throw ValidationError("score_text: empty continuation");
  score_calls_.fetch_add(1);
  std::vector<int> history = history_of(context);
  const auto keep = static_cast<std::size_t>(spec_.order - 1);
  std::vector<TokenScore> out;
  for (int id : tokenize(continuation, false)) {
    double p = distribution(history)[static_cast<std::size_t>(id)];
    const auto& sym = spec_.vocabulary[static_cast<std::size_t>(id)];
    if (!(p > 0.0)) throw ValidationError("toy model '" + spec_.name + "' assigns zero probability to '" + sym + "'");
    out.push_back({sym, std::log(p)});
    if (keep > 0) {
      history.push_back(id);
      if (history.size() > keep) history.erase(history.begin());
    }
  }
  return out;
}

}  // namespace chunksel
