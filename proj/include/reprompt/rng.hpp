#pragma once

// Deterministic random source for the sampler. std:: distributions are
// implementation-defined, so the integer and real conversions are spelled
// out here to keep runs replayable across standard libraries.

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace reprompt {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on [0, n), rejection-sampled to avoid modulo bias.
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  // k distinct values from [0, n) \ {exclude}, in draw order (partial
  // Fisher-Yates over the eligible set).
  std::vector<std::size_t> sample_without(std::size_t n, std::size_t k, std::size_t exclude) {
    std::vector<std::size_t> eligible;
    eligible.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      if (i != exclude) eligible.push_back(i);
    if (k > eligible.size()) throw std::invalid_argument("sample_without: k exceeds eligible set");
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t pick = i + uniform_index(eligible.size() - i);
      std::swap(eligible[i], eligible[pick]);
    }
    eligible.resize(k);
    return eligible;
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) std::swap(values[i - 1], values[uniform_index(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace reprompt
