#include "fixtures.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace chunksel::testing {

ToyModelSpec selection_teacher(std::uint64_t seed) {
  ToyModelSpec s;
  s.name = "sel-teacher";
  s.order = 2;
  s.seed = seed;
  s.vocabulary = {"a", "b", "c", "d", " ", "\\boxed{1}", "\\boxed{2}", "$"};
  s.end_symbol = "$";
  s.transition_weights = {
      {{}, {5, 3, 2, 1, 2, 0.5, 0.5, 0.25}},
      {{"a"}, {1, 4, 2, 1, 2, 0.5, 0.25, 0.5}},
      {{"b"}, {3, 1, 1, 2, 3, 0.25, 0.5, 0.5}},
      {{"c"}, {2, 2, 1, 3, 1, 0.5, 0.5, 0.25}},
      {{"d"}, {1, 1, 4, 1, 2, 0.25, 0.25, 1}},
      {{" "}, {4, 2, 2, 2, 0.5, 1, 1, 0.5}},
      {{"\\boxed{1}"}, {1, 0, 0, 0, 1, 0, 0, 4}},
      {{"\\boxed{2}"}, {0, 1, 0, 0, 1, 0, 0, 4}},
  };
  return s;
}

ToyModelSpec selection_student() {
  ToyModelSpec s;
  s.name = "sel-student";
  s.order = 2;
  s.seed = 0;
  s.vocabulary = {"a", "b", "c", "d", " ", "\\boxed{1}", "\\boxed{2}", "$"};
  s.end_symbol = "$";
  s.transition_weights = {
      {{}, {2, 2, 1, 1, 3, 1, 1, 1}},
      {{"a"}, {6, 1, 1, 1, 1, 1, 0.5, 1}},
      {{"b"}, {1, 1, 5, 1, 2, 0.5, 1, 1}},
      {{"c"}, {1, 3, 1, 1, 4, 1, 1, 0.5}},
      {{"d"}, {2, 1, 1, 1, 1, 1, 1, 2}},
      {{" "}, {1, 1, 1, 5, 0.5, 2, 1, 1}},
      {{"\\boxed{1}"}, {1, 1, 1, 1, 1, 0.5, 0.5, 6}},
      {{"\\boxed{2}"}, {1, 1, 1, 1, 1, 0.5, 0.5, 3}},
  };
  return s;
}

ToyModelSpec coin_teacher() {
  ToyModelSpec s;
  s.name = "coin-teacher";
  s.order = 2;
  s.seed = 5;
  s.vocabulary = {"x", " ", "\\boxed{1}", "\\boxed{2}", "$"};
  s.end_symbol = "$";
  s.transition_weights = {
      {{}, {4, 2, 1, 1, 0}},
      {{"\\boxed{1}"}, {0, 0, 0, 0, 1}},
      {{"\\boxed{2}"}, {0, 0, 0, 0, 1}},
  };
  return s;
}

ToyModelSpec coin_student() {
  ToyModelSpec s;
  s.name = "coin-student";
  s.order = 2;
  s.seed = 0;
  s.vocabulary = {"x", " ", "\\boxed{1}", "\\boxed{2}", "$"};
  s.end_symbol = "$";
  s.transition_weights = {
      {{}, {2, 3, 2, 1, 1}},
      {{"x"}, {5, 1, 1, 1, 1}},
      {{" "}, {1, 1, 2, 2, 1}},
      {{"\\boxed{1}"}, {1, 1, 0.5, 0.5, 3}},
      {{"\\boxed{2}"}, {1, 1, 0.5, 0.5, 2}},
  };
  return s;
}

std::vector<Problem> coin_problems(int count, const std::string& id_prefix) {
  std::vector<Problem> out;
  for (int i = 0; i < count; ++i) {
    Problem p;
    char id[32];
    std::snprintf(id, sizeof id, "%s%04d", id_prefix.c_str(), i);
    p.problem_id = id;
    p.prompt = "Question " + std::to_string(i) + ": flip?\n";
    p.gold_answer = i % 2 == 0 ? "1" : "2";
    out.push_back(std::move(p));
  }
  return out;
}

ToyModelSpec fixed_answer_teacher(bool correct) {
  ToyModelSpec s;
  s.name = correct ? "always-right" : "always-wrong";
  s.order = 2;
  s.seed = 3;
  s.vocabulary = {"w", "\\boxed{1}", "\\boxed{2}", "$"};
  s.end_symbol = "$";
  const double right = correct ? 1 : 0;
  const double wrong = correct ? 0 : 1;
  s.transition_weights = {
      {{}, {1, right, wrong, 0}},
      {{"w"}, {0, right, wrong, 0}},
      {{"\\boxed{1}"}, {0, 0, 0, 1}},
      {{"\\boxed{2}"}, {0, 0, 0, 1}},
  };
  return s;
}

ToyModelSpec quarter_student() {
  ToyModelSpec s;
  s.name = "quarter";
  s.order = 2;
  s.vocabulary = {"p", "q", "r", "x", "y"};
  s.end_symbol = "y";
  s.transition_weights = {
      {{}, {1, 1, 1, 1, 1}},
      {{"p"}, {0, 0, 0, 1, 0}},
      {{"q"}, {0, 0, 0, 1, 1}},
      {{"r"}, {0, 0, 0, 1, 3}},
  };
  return s;
}

ToyModelSpec uniform_model() {
  ToyModelSpec s;
  s.name = "uniform";
  s.order = 1;
  s.vocabulary = {"u", "v", "w", "z"};
  s.end_symbol = "z";
  s.transition_weights = {{{}, {1, 1, 1, 1}}};
  return s;
}

ToyModelSpec spike_model() {
  ToyModelSpec s;
  s.name = "spike";
  s.order = 1;
  s.vocabulary = {"m", "s", "e"};
  s.end_symbol = "e";
  s.transition_weights = {{{}, {512, 1, 511}}};
  return s;
}

TempDir::TempDir(const std::string& tag) {
  std::string pattern = (std::filesystem::temp_directory_path() / ("chunksel-" + tag + "-XXXXXX")).string();
  if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace chunksel::testing
