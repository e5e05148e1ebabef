#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace chunksel {

// FNV-1a, 64 bit. Used to turn identifiers into seed material.
std::uint64_t stable_hash(std::string_view text);

// Combines seed components through std::seed_seq (bit-specified by the
// standard, so derived seeds are identical on every platform).
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

/// Seeded stream of uniforms with a fixed, portable derivation.
///
/// uniform() takes the top 53 bits of one std::mt19937_64 draw and scales by
/// 2^-53, giving a value in [0, 1). uniform_index(n) returns floor(u * n).
/// This is the project's one seeded uniform-integer procedure; golden tests
/// pin its outputs.
class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed) : engine_(seed) {}

  double uniform();
  std::size_t uniform_index(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace chunksel
