#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace panda {

/// Lowercases and splits on every non-alphanumeric byte. Empty tokens are dropped.
std::vector<std::string> tokenize(std::string_view text);

/// 64-bit FNV-1a. Stable across platforms and runs.
std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// splitmix64 finalizer, used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x);

std::string hex64(std::uint64_t v);

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
template <typename Engine>
double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n). n must be positive.
template <typename Engine>
std::size_t uniform_index(Engine& eng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(eng) * static_cast<double>(n)) % n;
}

}  // namespace panda
