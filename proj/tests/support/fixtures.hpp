#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "chunksel/answer.hpp"
#include "chunksel/toy_model.hpp"

namespace chunksel::testing {

// Vocabulary shared by the selection teacher/student pair: 8 symbols, order 2.
ToyModelSpec selection_teacher(std::uint64_t seed = 11);
ToyModelSpec selection_student();

// Teacher whose final boxed answer is "1" or "2" with equal odds, and a
// student over the same symbols.
ToyModelSpec coin_teacher();
ToyModelSpec coin_student();

// Problems whose gold answers alternate "1"/"2", prompts outside the toy
// vocabularies.
std::vector<Problem> coin_problems(int count, const std::string& id_prefix = "p");

// Teacher that always (or never) ends with the gold answer "1".
ToyModelSpec fixed_answer_teacher(bool correct);

// Order-2 student over {p, q, r, x, y}: P(x|p) = 1, P(x|q) = 1/2, P(x|r) = 1/4.
ToyModelSpec quarter_student();

// Uniform unigram over {u, v, w, z}.
ToyModelSpec uniform_model();

// Unigram over {m, s}: m has probability 1/2, s has probability 1/1024.
ToyModelSpec spike_model();

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

}  // namespace chunksel::testing
