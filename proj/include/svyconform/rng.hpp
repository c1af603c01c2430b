#pragma once

#include <cstdint>
#include <random>

namespace svyconform {

/// SplitMix64 finalizer. Used both as a seed mixer and to derive
/// independent streams from a base seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Stream tags keep the seeds used for different purposes inside one
/// replicate apart (sampling vs. splitting vs. subsampling).
enum class Stream : std::uint64_t {
  kPopulation = 1,
  kDraw = 2,
  kSplit = 3,
  kSubsample = 4,
  kMisc = 5,
};

/// Seed for replicate `index` of purpose `stream`:
///   splitmix64(splitmix64(base ^ splitmix64(tag)) + index)
/// Replicates never share state, so a parallel run reproduces a serial one.
constexpr std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                    std::uint64_t index) {
  const auto tag = static_cast<std::uint64_t>(stream);
  return splitmix64(splitmix64(base ^ splitmix64(tag)) + index);
}

/// Thin wrapper over mt19937_64. Uniform variates are produced from raw
/// engine output so results do not depend on the standard library's
/// distribution implementations (normals excepted).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n). Rejection sampling, so unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return r % n;
  }

  double normal() { return normal_(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Fisher-Yates shuffle driven by Rng::uniform_index.
template <typename Container>
void shuffle(Container& c, Rng& rng) {
  for (std::size_t i = c.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(c[i - 1], c[j]);
  }
}

}  // namespace svyconform
